//! Structured directives: grammar, canonical printing, and validation
//! against the statement a directive is attached to.
//!
//! Grammar of the text following the `//#omp` sentinel:
//!
//! ```text
//! directive := ("parallel" ["for"] | "for") clause*
//! clause    := "shared" "(" names ")" | "private" "(" names ")"
//!            | "firstprivate" "(" names ")"
//!            | "reduction" "(" ("+" | "*" | "min" | "max") ":" names ")"
//!            | "schedule" "(" ("static" | "dynamic" | "guided") ["," int] ")"
//!            | "num_threads" "(" int ")"
//! ```
//!
//! Clauses may optionally be separated by commas.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::frontend::ast::{walk_block_exprs, walk_expr, Block, Expr, ExprKind, Pos, Stmt, StmtKind, Type, UnaryOp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DirectiveError {
    #[error("directive syntax error: {0}")]
    Syntax(String),
    #[error("variable `{0}` appears in more than one data-sharing clause")]
    ConflictingSharing(String),
    #[error("worksharing directive must be attached to a counted `for` loop")]
    NotALoop,
    #[error("loop is not in canonical form: {0}")]
    NonCanonicalLoop(String),
    #[error("unknown variable `{0}` in directive")]
    UnknownVariable(String),
    #[error("`for` directive is not lexically inside a parallel region")]
    OrphanedWorksharing,
    #[error("`for` directive is nested directly inside another worksharing loop")]
    NestedWorksharing,
    #[error("invalid directive target: {0}")]
    InvalidTarget(String),
    #[error("loop induction variable `{0}` may not appear in a clause")]
    InductionVariableInClause(String),
    #[error("reduction variable `{0}` must be an int or float scalar")]
    InvalidReduction(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DirectiveKind {
    Parallel,
    For,
    ParallelFor,
}

impl DirectiveKind {
    pub fn is_loop(self) -> bool {
        matches!(self, DirectiveKind::For | DirectiveKind::ParallelFor)
    }

    /// Whether the directive creates a new team.
    pub fn forks(self) -> bool {
        matches!(self, DirectiveKind::Parallel | DirectiveKind::ParallelFor)
    }
}

impl fmt::Display for DirectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DirectiveKind::Parallel => "parallel",
            DirectiveKind::For => "for",
            DirectiveKind::ParallelFor => "parallel for",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReduceOp {
    Add,
    Mul,
    Min,
    Max,
}

impl fmt::Display for ReduceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReduceOp::Add => "+",
            ReduceOp::Mul => "*",
            ReduceOp::Min => "min",
            ReduceOp::Max => "max",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ScheduleKind {
    #[default]
    Static,
    Dynamic,
    Guided,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Static => "static",
            ScheduleKind::Dynamic => "dynamic",
            ScheduleKind::Guided => "guided",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Clause {
    Shared(Vec<String>),
    Private(Vec<String>),
    Firstprivate(Vec<String>),
    Reduction(ReduceOp, Vec<String>),
    Schedule(ScheduleKind, Option<u64>),
    NumThreads(u32),
}

impl Clause {
    fn names(&self) -> &[String] {
        match self {
            Clause::Shared(n) | Clause::Private(n) | Clause::Firstprivate(n) | Clause::Reduction(_, n) => n,
            Clause::Schedule(..) | Clause::NumThreads(_) => &[],
        }
    }

    fn role(&self) -> Option<&'static str> {
        Some(match self {
            Clause::Shared(_) => "shared",
            Clause::Private(_) => "private",
            Clause::Firstprivate(_) => "firstprivate",
            Clause::Reduction(..) => "reduction",
            _ => return None,
        })
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Clause::Shared(n) => write!(f, "shared({})", n.join(", ")),
            Clause::Private(n) => write!(f, "private({})", n.join(", ")),
            Clause::Firstprivate(n) => write!(f, "firstprivate({})", n.join(", ")),
            Clause::Reduction(op, n) => write!(f, "reduction({op}: {})", n.join(", ")),
            Clause::Schedule(kind, None) => write!(f, "schedule({kind})"),
            Clause::Schedule(kind, Some(c)) => write!(f, "schedule({kind}, {c})"),
            Clause::NumThreads(n) => write!(f, "num_threads({n})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Directive {
    pub kind: DirectiveKind,
    pub clauses: Vec<Clause>,
    pub pos: Pos,
}

/// Canonical form; [`parse_directive`] reads it back to an equal value.
impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        for c in &self.clauses {
            write!(f, " {c}")?;
        }
        Ok(())
    }
}

/// How a variable is shared by a region, as requested by the clauses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sharing {
    Shared,
    Private,
    Firstprivate,
    Reduction(ReduceOp),
}

impl Directive {
    pub fn schedule(&self) -> (ScheduleKind, Option<u64>) {
        self.clauses
            .iter()
            .find_map(|c| match c {
                Clause::Schedule(k, chunk) => Some((*k, *chunk)),
                _ => None,
            })
            .unwrap_or_default()
    }

    pub fn num_threads(&self) -> Option<u32> {
        self.clauses.iter().find_map(|c| match c {
            Clause::NumThreads(n) => Some(*n),
            _ => None,
        })
    }

    /// The explicit sharing of `name`. When a name appears in several roles
    /// (rejected by validation), reduction wins over firstprivate, then
    /// private, then shared.
    pub fn sharing_of(&self, name: &str) -> Option<Sharing> {
        let mut best: Option<(u8, Sharing)> = None;
        for c in &self.clauses {
            if !c.names().iter().any(|n| n == name) {
                continue;
            }
            let cand = match c {
                Clause::Reduction(op, _) => (3, Sharing::Reduction(*op)),
                Clause::Firstprivate(_) => (2, Sharing::Firstprivate),
                Clause::Private(_) => (1, Sharing::Private),
                Clause::Shared(_) => (0, Sharing::Shared),
                _ => continue,
            };
            if best.is_none_or(|(rank, _)| cand.0 > rank) {
                best = Some(cand);
            }
        }
        best.map(|(_, s)| s)
    }

    pub fn named_variables(&self) -> impl Iterator<Item = &String> {
        self.clauses.iter().flat_map(|c| c.names().iter())
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Int(String),
    Sym(char),
}

fn lex(raw: &str) -> Result<Vec<Tok>, DirectiveError> {
    let mut out = Vec::new();
    let mut chars = raw.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut w = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    w.push(c);
                    chars.next();
                } else {
                    break;
                }
            }
            out.push(Tok::Word(w));
        } else if c.is_ascii_digit() || c == '-' {
            let mut w = String::new();
            w.push(c);
            chars.next();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_digit() {
                    w.push(c);
                    chars.next();
                } else {
                    break;
                }
            }
            out.push(Tok::Int(w));
        } else if "(),:+*".contains(c) {
            out.push(Tok::Sym(c));
            chars.next();
        } else {
            return Err(DirectiveError::Syntax(format!("unexpected character {c:?}")));
        }
    }
    Ok(out)
}

struct DirectiveParser {
    toks: Vec<Tok>,
    at: usize,
}

fn syntax(msg: impl Into<String>) -> DirectiveError {
    DirectiveError::Syntax(msg.into())
}

impl DirectiveParser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).cloned();
        self.at += 1;
        t
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, c: char, context: &str) -> Result<(), DirectiveError> {
        if self.eat_sym(c) {
            Ok(())
        } else {
            Err(syntax(format!("expected `{c}` in {context}")))
        }
    }

    fn word(&mut self, context: &str) -> Result<String, DirectiveError> {
        match self.next() {
            Some(Tok::Word(w)) => Ok(w),
            _ => Err(syntax(format!("expected a name in {context}"))),
        }
    }

    fn positive(&mut self, context: &str) -> Result<u64, DirectiveError> {
        match self.next() {
            Some(Tok::Int(s)) => match s.parse::<i128>() {
                Ok(v) if v >= 1 && v <= u32::MAX as i128 => Ok(v as u64),
                Ok(_) => Err(syntax(format!("{context} must be a positive integer, got {s}"))),
                Err(_) => Err(syntax(format!("malformed integer `{s}` in {context}"))),
            },
            _ => Err(syntax(format!("expected an integer in {context}"))),
        }
    }

    fn names(&mut self, clause: &str) -> Result<Vec<String>, DirectiveError> {
        let mut names = Vec::new();
        loop {
            let n = self.word(clause)?;
            if names.contains(&n) {
                return Err(syntax(format!("duplicate name `{n}` in {clause} clause")));
            }
            names.push(n);
            if !self.eat_sym(',') {
                break;
            }
        }
        self.expect_sym(')', clause)?;
        Ok(names)
    }

    fn clause(&mut self) -> Result<Clause, DirectiveError> {
        let name = self.word("clause list")?;
        let ctx = name.as_str();
        if !matches!(
            ctx,
            "shared" | "private" | "firstprivate" | "reduction" | "schedule" | "num_threads"
        ) {
            return Err(syntax(format!("unknown clause `{name}`")));
        }
        self.expect_sym('(', ctx)?;
        Ok(match ctx {
            "shared" => Clause::Shared(self.names(ctx)?),
            "private" => Clause::Private(self.names(ctx)?),
            "firstprivate" => Clause::Firstprivate(self.names(ctx)?),
            "reduction" => {
                let op = match self.next() {
                    Some(Tok::Sym('+')) => ReduceOp::Add,
                    Some(Tok::Sym('*')) => ReduceOp::Mul,
                    Some(Tok::Word(w)) if w == "min" => ReduceOp::Min,
                    Some(Tok::Word(w)) if w == "max" => ReduceOp::Max,
                    _ => return Err(syntax("unknown reduction operator")),
                };
                self.expect_sym(':', ctx)?;
                Clause::Reduction(op, self.names(ctx)?)
            }
            "schedule" => {
                let kind = match self.word(ctx)?.as_str() {
                    "static" => ScheduleKind::Static,
                    "dynamic" => ScheduleKind::Dynamic,
                    "guided" => ScheduleKind::Guided,
                    other => return Err(syntax(format!("unknown schedule kind `{other}`"))),
                };
                let chunk = if self.eat_sym(',') {
                    Some(self.positive("schedule chunk")?)
                } else {
                    None
                };
                self.expect_sym(')', ctx)?;
                Clause::Schedule(kind, chunk)
            }
            _ => {
                let n = self.positive("num_threads")?;
                self.expect_sym(')', ctx)?;
                Clause::NumThreads(n as u32)
            }
        })
    }
}

/// Parses the text that follows the `//#omp` sentinel.
pub fn parse_directive(raw: &str, pos: Pos) -> Result<Directive, DirectiveError> {
    let mut p = DirectiveParser { toks: lex(raw)?, at: 0 };
    let kind = match p.next() {
        Some(Tok::Word(w)) if w == "parallel" => {
            if p.peek() == Some(&Tok::Word("for".into())) {
                p.next();
                DirectiveKind::ParallelFor
            } else {
                DirectiveKind::Parallel
            }
        }
        Some(Tok::Word(w)) if w == "for" => DirectiveKind::For,
        Some(Tok::Word(w)) => return Err(syntax(format!("unknown directive `{w}`"))),
        _ => return Err(syntax("expected `parallel` or `for`")),
    };
    let mut clauses = Vec::new();
    while p.peek().is_some() {
        if !clauses.is_empty() {
            p.eat_sym(',');
        }
        clauses.push(p.clause()?);
    }

    let count = |f: fn(&Clause) -> bool| clauses.iter().filter(|c| f(c)).count();
    if count(|c| matches!(c, Clause::Schedule(..))) > 1 {
        return Err(syntax("more than one schedule clause"));
    }
    if count(|c| matches!(c, Clause::NumThreads(_))) > 1 {
        return Err(syntax("more than one num_threads clause"));
    }
    if kind == DirectiveKind::For && count(|c| matches!(c, Clause::NumThreads(_))) > 0 {
        return Err(syntax("num_threads is not allowed on a `for` directive"));
    }
    if kind == DirectiveKind::Parallel && count(|c| matches!(c, Clause::Schedule(..))) > 0 {
        return Err(syntax("schedule requires a worksharing loop"));
    }
    Ok(Directive { kind, clauses, pos })
}

// ---------------------------------------------------------------------------
// Validation

/// A directive that passed [`validate_directive`] for its target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckedDirective {
    pub directive: Directive,
}

impl std::ops::Deref for CheckedDirective {
    type Target = Directive;
    fn deref(&self) -> &Directive {
        &self.directive
    }
}

/// What the validator needs to know about the directive site.
#[derive(Debug, Clone, Default)]
pub struct SiteContext {
    /// Variables in scope at the directive, with their types.
    pub visible: HashMap<String, Type>,
    /// Whether the site is lexically inside a parallel region.
    pub in_parallel: bool,
    /// Whether the innermost enclosing region is a worksharing loop.
    pub in_worksharing: bool,
}

/// Names a loop body may modify: assignment targets plus variables handed to
/// calls (a callee can write through an array argument).
fn modified_names(block: &Block, assigned: &mut HashSet<String>, passed: &mut HashSet<String>) {
    for s in &block.stmts {
        match &s.kind {
            StmtKind::Assign { name, .. } | StmtKind::IndexAssign { name, .. } => {
                assigned.insert(name.clone());
            }
            StmtKind::If {
                then_block, else_block, ..
            } => {
                modified_names(then_block, assigned, passed);
                if let Some(b) = else_block {
                    modified_names(b, assigned, passed);
                }
            }
            StmtKind::While { body, .. } | StmtKind::For { body, .. } | StmtKind::Block(body) => {
                modified_names(body, assigned, passed)
            }
            StmtKind::Call { args, .. } => {
                for a in args {
                    if let ExprKind::Var(n) = &a.kind {
                        passed.insert(n.clone());
                    }
                }
            }
            _ => {}
        }
    }
    walk_block_exprs(block, &mut |e| {
        if let ExprKind::Call { args, .. } = &e.kind {
            for a in args {
                if let ExprKind::Var(n) = &a.kind {
                    passed.insert(n.clone());
                }
            }
        }
    });
}

fn any_return(stmts: &[Stmt]) -> bool {
    stmts.iter().any(|s| match &s.kind {
        StmtKind::Return(_) => true,
        StmtKind::If {
            then_block, else_block, ..
        } => any_return(&then_block.stmts) || else_block.as_ref().is_some_and(|b| any_return(&b.stmts)),
        StmtKind::While { body, .. } | StmtKind::For { body, .. } | StmtKind::Block(body) => any_return(&body.stmts),
        _ => false,
    })
}

const PURE_BUILTINS: &[&str] = &[
    "sqrt",
    "abs",
    "floor",
    "min",
    "max",
    "log",
    "split_seed",
    "rand_uniform",
    "len",
    "num_threads",
];

fn check_invariant(e: &Expr, assigned: &HashSet<String>, what: &str) -> Result<(), DirectiveError> {
    let mut err = None;
    walk_expr(e, &mut |sub| {
        if err.is_some() {
            return;
        }
        match &sub.kind {
            ExprKind::Var(n) | ExprKind::Index { name: n, .. } if assigned.contains(n) => {
                err = Some(format!("{what} depends on `{n}`, which the loop body modifies"));
            }
            ExprKind::Call { name, .. } if !PURE_BUILTINS.contains(&name.as_str()) => {
                err = Some(format!("{what} calls `{name}`"));
            }
            _ => {}
        }
    });
    err.map_or(Ok(()), |m| Err(DirectiveError::NonCanonicalLoop(m)))
}

/// Cross-clause and target checks for a parsed directive.
pub fn validate_directive(
    d: &Directive,
    target: &Stmt,
    site: &SiteContext,
) -> Result<CheckedDirective, DirectiveError> {
    let mut induction = None;
    match (&target.kind, d.kind.is_loop()) {
        (
            StmtKind::For {
                var,
                lower,
                upper,
                step,
                body,
            },
            true,
        ) => {
            let mut assigned = HashSet::new();
            let mut passed = HashSet::new();
            modified_names(body, &mut assigned, &mut passed);
            assigned.extend(
                passed
                    .into_iter()
                    .filter(|n| matches!(site.visible.get(n), Some(Type::Array(_)))),
            );
            check_invariant(lower, &assigned, "lower bound")?;
            check_invariant(upper, &assigned, "upper bound")?;
            if let Some(step) = step {
                check_invariant(step, &assigned, "step")?;
                let literal = match &step.kind {
                    ExprKind::Int(v) => Some(*v),
                    ExprKind::Unary {
                        op: UnaryOp::Neg,
                        operand,
                    } => match operand.kind {
                        ExprKind::Int(v) => Some(-v),
                        _ => None,
                    },
                    _ => None,
                };
                if literal.is_some_and(|v| v < 1) {
                    return Err(DirectiveError::NonCanonicalLoop("step must be at least 1".into()));
                }
            }
            induction = Some(var.as_str());
        }
        (_, true) => return Err(DirectiveError::NotALoop),
        (StmtKind::Let { .. }, false) => {
            return Err(DirectiveError::InvalidTarget(
                "a declaration cannot be a parallel region".into(),
            ))
        }
        (StmtKind::Return(_), false) => {
            return Err(DirectiveError::InvalidTarget(
                "`return` cannot be a parallel region".into(),
            ))
        }
        (StmtKind::Fork { .. }, false) => return Err(DirectiveError::InvalidTarget("already lowered".into())),
        _ => {}
    }
    if any_return(std::slice::from_ref(target)) {
        return Err(DirectiveError::InvalidTarget(
            "`return` inside a parallel region".into(),
        ));
    }
    if d.kind == DirectiveKind::For && !site.in_parallel {
        return Err(DirectiveError::OrphanedWorksharing);
    }
    if d.kind == DirectiveKind::For && site.in_worksharing {
        return Err(DirectiveError::NestedWorksharing);
    }

    let mut roles: HashMap<&str, &'static str> = HashMap::new();
    for c in &d.clauses {
        let Some(role) = c.role() else { continue };
        for name in c.names() {
            if Some(name.as_str()) == induction {
                return Err(DirectiveError::InductionVariableInClause(name.clone()));
            }
            let Some(ty) = site.visible.get(name) else {
                return Err(DirectiveError::UnknownVariable(name.clone()));
            };
            if let Some(prev) = roles.insert(name, role) {
                if prev != role {
                    return Err(DirectiveError::ConflictingSharing(name.clone()));
                }
            }
            if role == "reduction" && !matches!(ty, Type::Int | Type::Float) {
                return Err(DirectiveError::InvalidReduction(name.clone()));
            }
        }
    }
    Ok(CheckedDirective { directive: d.clone() })
}
