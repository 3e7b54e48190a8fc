//! Outlining of directive-annotated statements into region functions.
//!
//! [`lower_program`] walks every function, parses and validates the attached
//! directives, and replaces each annotated statement with a
//! [`StmtKind::Fork`] node that names an [`OutlinedRegion`]. Region ids are
//! assigned in source order; a region nested in another region's body gets a
//! larger id than its parent.

use std::collections::{HashMap, HashSet};
use std::fmt::Write;

use crate::diag::{Diagnostic, Diagnostics};
use crate::directives::{
    parse_directive, validate_directive, CheckedDirective, Directive, DirectiveError, DirectiveKind, ReduceOp,
    ScheduleKind, Sharing, SiteContext,
};
use crate::frontend::ast::*;
use crate::frontend::pretty::print_expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptureMode {
    SharedRef,
    PrivateZero,
    FirstprivateCopy,
    ReductionSlot(ReduceOp),
}

impl std::fmt::Display for CaptureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CaptureMode::SharedRef => f.write_str("shared"),
            CaptureMode::PrivateZero => f.write_str("private"),
            CaptureMode::FirstprivateCopy => f.write_str("firstprivate"),
            CaptureMode::ReductionSlot(op) => write!(f, "reduction({op})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub name: String,
    pub ty: Type,
    pub mode: CaptureMode,
    /// Index into the region's environment record.
    pub slot: usize,
}

/// Loop descriptor of a worksharing region. Bounds are expressions in the
/// enclosing scope, evaluated once by the thread that reaches the region.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkshareLoop {
    pub var: String,
    pub lower: Expr,
    pub upper: Expr,
    pub step: Expr,
    pub schedule: ScheduleKind,
    pub chunk: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlinedRegion {
    pub id: usize,
    pub kind: DirectiveKind,
    pub directive: Directive,
    /// The block (parallel) or loop body (worksharing), already lowered.
    pub body: Block,
    pub captures: Vec<Capture>,
    pub loop_: Option<WorkshareLoop>,
    pub num_threads: Option<u32>,
    pub pos: Pos,
}

impl OutlinedRegion {
    pub fn capture(&self, name: &str) -> Option<&Capture> {
        self.captures.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoweredProgram {
    /// Host program, directive-free, with fork nodes in place of regions.
    pub program: Program,
    pub regions: Vec<OutlinedRegion>,
}

// ---------------------------------------------------------------------------
// Free variables

fn note(name: &str, seen: &mut HashSet<String>, order: &mut Vec<String>) {
    if seen.insert(name.to_string()) {
        order.push(name.to_string());
    }
}

fn expr_names(e: &Expr, seen: &mut HashSet<String>, order: &mut Vec<String>) {
    walk_expr(e, &mut |sub| match &sub.kind {
        ExprKind::Var(n) | ExprKind::Index { name: n, .. } => note(n, seen, order),
        _ => {}
    });
}

fn block_names(b: &Block, seen: &mut HashSet<String>, order: &mut Vec<String>, declared: &mut HashSet<String>) {
    for s in &b.stmts {
        stmt_names(s, seen, order, declared);
    }
}

/// Collects referenced names in textual order, and names declared inside.
fn stmt_names(s: &Stmt, seen: &mut HashSet<String>, order: &mut Vec<String>, declared: &mut HashSet<String>) {
    match &s.kind {
        StmtKind::Let { name, len, init, .. } => {
            declared.insert(name.clone());
            for e in [len, init].into_iter().flatten() {
                expr_names(e, seen, order);
            }
        }
        StmtKind::Assign { name, value } => {
            note(name, seen, order);
            expr_names(value, seen, order);
        }
        StmtKind::IndexAssign { name, index, value } => {
            note(name, seen, order);
            expr_names(index, seen, order);
            expr_names(value, seen, order);
        }
        StmtKind::If {
            cond,
            then_block,
            else_block,
        } => {
            expr_names(cond, seen, order);
            block_names(then_block, seen, order, declared);
            if let Some(b) = else_block {
                block_names(b, seen, order, declared);
            }
        }
        StmtKind::While { cond, body } => {
            expr_names(cond, seen, order);
            block_names(body, seen, order, declared);
        }
        StmtKind::For {
            var,
            lower,
            upper,
            step,
            body,
        } => {
            declared.insert(var.clone());
            expr_names(lower, seen, order);
            expr_names(upper, seen, order);
            if let Some(s) = step {
                expr_names(s, seen, order);
            }
            block_names(body, seen, order, declared);
        }
        StmtKind::Block(b) => block_names(b, seen, order, declared),
        StmtKind::Call { args, .. } | StmtKind::Print(args) => {
            for a in args {
                expr_names(a, seen, order);
            }
        }
        StmtKind::Return(v) => {
            if let Some(e) = v {
                expr_names(e, seen, order);
            }
        }
        StmtKind::Fork { args, .. } => {
            for a in args {
                note(a, seen, order);
            }
        }
    }
}

/// Variables referenced in `body` but declared outside it, in order of first
/// reference. `bound` names are treated as declared.
pub fn free_variables(body: &Block, bound: &[&str]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut order = Vec::new();
    let mut declared: HashSet<String> = bound.iter().map(|s| s.to_string()).collect();
    block_names(body, &mut seen, &mut order, &mut declared);
    order.retain(|n| !declared.contains(n));
    order
}

// ---------------------------------------------------------------------------
// Capture classification and outlining

/// One capture per free variable of `body`, in order of first reference.
pub fn classify_captures(
    body: &Block,
    d: &CheckedDirective,
    induction: Option<&str>,
    visible: &HashMap<String, Type>,
) -> Result<Vec<Capture>, DirectiveError> {
    let bound: Vec<&str> = induction.into_iter().collect();
    free_variables(body, &bound)
        .into_iter()
        .enumerate()
        .map(|(slot, name)| {
            let ty = *visible
                .get(&name)
                .ok_or_else(|| DirectiveError::UnknownVariable(name.clone()))?;
            let mode = match d.sharing_of(&name) {
                Some(Sharing::Reduction(op)) => CaptureMode::ReductionSlot(op),
                Some(Sharing::Firstprivate) => CaptureMode::FirstprivateCopy,
                Some(Sharing::Private) => CaptureMode::PrivateZero,
                Some(Sharing::Shared) | None => CaptureMode::SharedRef,
            };
            Ok(Capture { name, ty, mode, slot })
        })
        .collect()
}

/// Builds the region for a validated directive. `body` is the target's
/// block (parallel) or loop body (worksharing), already lowered.
pub fn outline(
    target: &Stmt,
    body: Block,
    d: &CheckedDirective,
    id: usize,
    visible: &HashMap<String, Type>,
) -> Result<OutlinedRegion, DirectiveError> {
    let loop_ = match (&target.kind, d.kind.is_loop()) {
        (
            StmtKind::For {
                var,
                lower,
                upper,
                step,
                ..
            },
            true,
        ) => {
            let (schedule, chunk) = d.schedule();
            Some(WorkshareLoop {
                var: var.clone(),
                lower: lower.clone(),
                upper: upper.clone(),
                step: step.clone().unwrap_or_else(|| Expr::new(ExprKind::Int(1), upper.pos)),
                schedule,
                chunk,
            })
        }
        (_, true) => return Err(DirectiveError::NotALoop),
        (_, false) => None,
    };
    let captures = classify_captures(&body, d, loop_.as_ref().map(|l| l.var.as_str()), visible)?;
    Ok(OutlinedRegion {
        id,
        kind: d.kind,
        directive: d.directive.clone(),
        body,
        captures,
        loop_,
        num_threads: d.num_threads(),
        pos: d.pos,
    })
}

/// Captured names in slot order, then any other names read by the loop
/// bounds, which are evaluated by the forking thread.
fn fork_args(region: &OutlinedRegion) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut order = Vec::new();
    for c in &region.captures {
        note(&c.name, &mut seen, &mut order);
    }
    if let Some(lp) = &region.loop_ {
        for e in [&lp.lower, &lp.upper, &lp.step] {
            expr_names(e, &mut seen, &mut order);
        }
    }
    order
}

struct Lowerer {
    scopes: Vec<HashMap<String, Type>>,
    regions: Vec<Option<OutlinedRegion>>,
    errors: Vec<Diagnostic>,
    parallel_depth: usize,
    /// Kinds of the regions enclosing the current statement, innermost last.
    enclosing: Vec<DirectiveKind>,
}

impl Lowerer {
    fn visible(&self) -> HashMap<String, Type> {
        let mut all = HashMap::new();
        for s in &self.scopes {
            all.extend(s.iter().map(|(k, v)| (k.clone(), *v)));
        }
        all
    }

    fn declare(&mut self, name: &str, ty: Type) {
        self.scopes
            .last_mut()
            .expect("scope stack is never empty")
            .insert(name.to_string(), ty);
    }

    fn block(&mut self, b: &Block) -> Block {
        self.scopes.push(HashMap::new());
        let stmts = b.stmts.iter().map(|s| self.stmt(s)).collect();
        self.scopes.pop();
        Block { stmts }
    }

    /// Lowers the children of `s` (not its own directives).
    fn lower_plain(&mut self, s: &Stmt) -> Stmt {
        let kind = match &s.kind {
            StmtKind::Let { name, ty, .. } => {
                self.declare(name, *ty);
                s.kind.clone()
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => StmtKind::If {
                cond: cond.clone(),
                then_block: self.block(then_block),
                else_block: else_block.as_ref().map(|b| self.block(b)),
            },
            StmtKind::While { cond, body } => StmtKind::While {
                cond: cond.clone(),
                body: self.block(body),
            },
            StmtKind::For {
                var,
                lower,
                upper,
                step,
                body,
            } => {
                self.scopes.push(HashMap::from([(var.clone(), Type::Int)]));
                let body = self.block(body);
                self.scopes.pop();
                StmtKind::For {
                    var: var.clone(),
                    lower: lower.clone(),
                    upper: upper.clone(),
                    step: step.clone(),
                    body,
                }
            }
            StmtKind::Block(b) => StmtKind::Block(self.block(b)),
            other => other.clone(),
        };
        Stmt {
            kind,
            pos: s.pos,
            directives: Vec::new(),
        }
    }

    fn stmt(&mut self, s: &Stmt) -> Stmt {
        let Some(raw) = s.attached_directive() else {
            return self.lower_plain(s);
        };
        let pos = s.directives[0].pos;
        let site = SiteContext {
            visible: self.visible(),
            in_parallel: self.parallel_depth > 0,
            in_worksharing: self.enclosing.last().is_some_and(|k| k.is_loop()),
        };
        let checked = parse_directive(&raw, pos).and_then(|d| validate_directive(&d, s, &site));
        let checked = match checked {
            Ok(c) => c,
            Err(e) => {
                self.errors.push(Diagnostic::new(pos, e));
                return self.lower_plain(s);
            }
        };

        let id = self.regions.len();
        self.regions.push(None);
        let forks = checked.kind.forks();
        if forks {
            self.parallel_depth += 1;
        }
        self.enclosing.push(checked.kind);
        let body = match &s.kind {
            StmtKind::For { var, body, .. } if checked.kind.is_loop() => {
                self.scopes.push(HashMap::from([(var.clone(), Type::Int)]));
                let b = self.block(body);
                self.scopes.pop();
                b
            }
            StmtKind::Block(b) => self.block(b),
            _ => {
                self.scopes.push(HashMap::new());
                let inner = self.lower_plain(s);
                self.scopes.pop();
                Block::new(vec![inner])
            }
        };
        self.enclosing.pop();
        if forks {
            self.parallel_depth -= 1;
        }

        match outline(s, body, &checked, id, &site.visible) {
            Ok(region) => {
                let args = fork_args(&region);
                self.regions[id] = Some(region);
                Stmt::new(StmtKind::Fork { region: id, args }, s.pos)
            }
            Err(e) => {
                self.errors.push(Diagnostic::new(pos, e));
                self.lower_plain(s)
            }
        }
    }
}

/// Outlines every directive in `program`. All directive errors are
/// reported, not just the first.
pub fn lower_program(program: &Program) -> Result<LoweredProgram, Diagnostics> {
    let mut lw = Lowerer {
        scopes: Vec::new(),
        regions: Vec::new(),
        errors: Vec::new(),
        parallel_depth: 0,
        enclosing: Vec::new(),
    };
    let mut host = program.clone();
    for f in &mut host.functions {
        lw.scopes = vec![f.params.iter().map(|p| (p.name.clone(), p.ty)).collect()];
        f.body = lw.block(&f.body);
    }
    if !lw.errors.is_empty() {
        return Err(Diagnostics(lw.errors).sorted());
    }
    let regions = lw
        .regions
        .into_iter()
        .map(|r| r.expect("regions are filled when no errors occurred"))
        .collect();
    Ok(LoweredProgram { program: host, regions })
}

/// Text dump of the region table: one block per region, captures ordered by
/// slot as `name : type : mode : slot`.
pub fn dump_regions(lowered: &LoweredProgram) -> String {
    let mut out = String::new();
    if lowered.regions.is_empty() {
        out.push_str("no parallel regions\n");
        return out;
    }
    for (i, r) in lowered.regions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "region {}", r.id);
        let _ = writeln!(out, "  kind: {}", r.kind);
        let _ = writeln!(out, "  line: {}", r.pos.line);
        match &r.loop_ {
            Some(l) => {
                match l.chunk {
                    Some(c) => {
                        let _ = writeln!(out, "  schedule: {}, {c}", l.schedule);
                    }
                    None => {
                        let _ = writeln!(out, "  schedule: {}", l.schedule);
                    }
                }
                let _ = writeln!(
                    out,
                    "  loop: {} in {}..{} step {}",
                    l.var,
                    print_expr(&l.lower),
                    print_expr(&l.upper),
                    print_expr(&l.step)
                );
            }
            None => out.push_str("  schedule: none\n  loop: none\n"),
        }
        match r.num_threads {
            Some(n) => {
                let _ = writeln!(out, "  num_threads: {n}");
            }
            None => out.push_str("  num_threads: default\n"),
        }
        let _ = writeln!(out, "  captures: {}", r.captures.len());
        let mut caps: Vec<&Capture> = r.captures.iter().collect();
        caps.sort_by_key(|c| c.slot);
        for c in caps {
            let _ = writeln!(out, "    {} : {} : {} : {}", c.name, c.ty, c.mode, c.slot);
        }
    }
    out
}
