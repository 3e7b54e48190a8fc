//! Name resolution and type checking for MK programs.
//!
//! Directives are ignored here. Variable names must be unique along a scope
//! chain (no shadowing), which lets later passes refer to variables by name.

use std::collections::HashMap;

use crate::diag::{CompileError, Diagnostic, Diagnostics};
use crate::frontend::ast::*;

pub const BUILTINS: &[&str] = &[
    "sqrt",
    "abs",
    "floor",
    "log",
    "min",
    "max",
    "split_seed",
    "rand_uniform",
    "now_seconds",
    "tid",
    "num_threads",
    "len",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    pub params: Vec<Type>,
    pub ret: Option<Type>,
}

/// Call targets visible everywhere in a program.
#[derive(Debug, Clone, Default)]
pub struct Signatures {
    pub functions: HashMap<String, Signature>,
    pub externs: HashMap<String, (Abi, Signature)>,
}

impl Signatures {
    pub fn of(program: &Program) -> Self {
        let sig = |params: &[Param], ret| Signature {
            params: params.iter().map(|p| p.ty).collect(),
            ret,
        };
        Self {
            functions: program
                .functions
                .iter()
                .map(|f| (f.name.clone(), sig(&f.params, f.ret)))
                .collect(),
            externs: program
                .externs
                .iter()
                .map(|e| (e.name.clone(), (e.abi, sig(&e.params, e.ret))))
                .collect(),
        }
    }

    fn lookup(&self, name: &str) -> Option<&Signature> {
        self.functions
            .get(name)
            .or_else(|| self.externs.get(name).map(|(_, s)| s))
    }
}

fn type_error(pos: Pos, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new(pos, CompileError::Type(msg.into()))
}

/// Result type of a builtin applied to arguments of the given types.
pub fn builtin_type(name: &str, args: &[Type]) -> Result<Type, String> {
    use Type::*;
    let bad = || {
        let shown: Vec<String> = args.iter().map(|t| t.to_string()).collect();
        Err(format!("no builtin `{name}` taking ({})", shown.join(", ")))
    };
    match (name, args) {
        ("sqrt" | "floor" | "log", [Float]) => Ok(Float),
        ("abs", [t @ (Int | Float)]) => Ok(*t),
        ("min" | "max", [a @ (Int | Float), b]) if a == b => Ok(*a),
        ("split_seed", [Int]) => Ok(Int),
        ("rand_uniform", [Int]) => Ok(Float),
        ("now_seconds", []) => Ok(Float),
        ("tid" | "num_threads", []) => Ok(Int),
        ("len", [Array(_)]) => Ok(Int),
        _ => bad(),
    }
}

/// Computes the type of `expr`. `vars` resolves variable names.
pub fn type_of(expr: &Expr, vars: &dyn Fn(&str) -> Option<Type>, sigs: &Signatures) -> Result<Type, Diagnostic> {
    let pos = expr.pos;
    match &expr.kind {
        ExprKind::Int(_) => Ok(Type::Int),
        ExprKind::Float(_) => Ok(Type::Float),
        ExprKind::Bool(_) => Ok(Type::Bool),
        ExprKind::Var(n) => vars(n).ok_or_else(|| type_error(pos, format!("unknown variable `{n}`"))),
        ExprKind::Index { name, index } => {
            let ty = vars(name).ok_or_else(|| type_error(pos, format!("unknown variable `{name}`")))?;
            let elem = ty
                .elem()
                .ok_or_else(|| type_error(pos, format!("`{name}` is not an array")))?;
            if type_of(index, vars, sigs)? != Type::Int {
                return Err(type_error(index.pos, "array index must be int"));
            }
            Ok(elem)
        }
        ExprKind::Unary { op, operand } => {
            let t = type_of(operand, vars, sigs)?;
            match (op, t) {
                (UnaryOp::Neg, Type::Int | Type::Float) => Ok(t),
                (UnaryOp::Not, Type::Bool) => Ok(Type::Bool),
                _ => Err(type_error(pos, format!("operator cannot be applied to {t}"))),
            }
        }
        ExprKind::Binary { op, lhs, rhs } => {
            let l = type_of(lhs, vars, sigs)?;
            let r = type_of(rhs, vars, sigs)?;
            if l != r {
                return Err(type_error(pos, format!("mismatched operands {l} {} {r}", op.symbol())));
            }
            match op {
                BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div if l.is_numeric() => Ok(l),
                BinaryOp::Rem if l == Type::Int => Ok(l),
                BinaryOp::Eq | BinaryOp::Ne if l.is_scalar() => Ok(Type::Bool),
                BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge if l.is_numeric() => Ok(Type::Bool),
                BinaryOp::And | BinaryOp::Or if l == Type::Bool => Ok(Type::Bool),
                _ => Err(type_error(
                    pos,
                    format!("operator `{}` cannot be applied to {l}", op.symbol()),
                )),
            }
        }
        ExprKind::Cast { to, operand } => {
            let t = type_of(operand, vars, sigs)?;
            if t.is_numeric() {
                Ok(*to)
            } else {
                Err(type_error(pos, format!("cannot convert {t} to {to}")))
            }
        }
        ExprKind::Call { name, args } => {
            let arg_types = args
                .iter()
                .map(|a| type_of(a, vars, sigs))
                .collect::<Result<Vec<_>, _>>()?;
            match call_type(name, &arg_types, sigs) {
                Ok(Some(t)) => Ok(t),
                Ok(None) => Err(type_error(pos, format!("`{name}` does not return a value"))),
                Err(m) => Err(type_error(pos, m)),
            }
        }
    }
}

/// Return type of a call (None for procedures).
pub fn call_type(name: &str, args: &[Type], sigs: &Signatures) -> Result<Option<Type>, String> {
    if let Some(sig) = sigs.lookup(name) {
        if sig.params.len() != args.len() {
            return Err(format!(
                "`{name}` expects {} argument(s), got {}",
                sig.params.len(),
                args.len()
            ));
        }
        for (i, (want, got)) in sig.params.iter().zip(args).enumerate() {
            if want != got {
                return Err(format!("argument {} of `{name}` must be {want}, got {got}", i + 1));
            }
        }
        return Ok(sig.ret);
    }
    if BUILTINS.contains(&name) {
        return builtin_type(name, args).map(Some);
    }
    Err(format!("unknown function `{name}`"))
}

#[derive(Debug, Clone, Copy)]
struct VarInfo {
    ty: Type,
    induction: bool,
}

struct Checker<'a> {
    sigs: &'a Signatures,
    scopes: Vec<HashMap<String, VarInfo>>,
    ret: Option<Type>,
    errors: Vec<Diagnostic>,
}

impl Checker<'_> {
    fn lookup(&self, name: &str) -> Option<VarInfo> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn declare(&mut self, name: &str, ty: Type, induction: bool, pos: Pos) {
        if self.lookup(name).is_some() {
            self.errors.push(type_error(
                pos,
                format!("`{name}` is already declared in an enclosing scope"),
            ));
        }
        self.scopes
            .last_mut()
            .expect("scope stack is never empty")
            .insert(name.to_string(), VarInfo { ty, induction });
    }

    fn expr(&mut self, e: &Expr) -> Option<Type> {
        let scopes = &self.scopes;
        let vars = |n: &str| scopes.iter().rev().find_map(|s| s.get(n).map(|v| v.ty));
        match type_of(e, &vars, self.sigs) {
            Ok(t) => Some(t),
            Err(d) => {
                self.errors.push(d);
                None
            }
        }
    }

    fn expect(&mut self, e: &Expr, want: Type, what: &str) {
        if let Some(t) = self.expr(e) {
            if t != want {
                self.errors
                    .push(type_error(e.pos, format!("{what} must be {want}, found {t}")));
            }
        }
    }

    fn block(&mut self, b: &Block) {
        self.scopes.push(HashMap::new());
        for s in &b.stmts {
            self.stmt(s);
        }
        self.scopes.pop();
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Let { name, ty, len, init } => {
                match (ty, len, init) {
                    (Type::Array(_), Some(len), None) => self.expect(len, Type::Int, "array length"),
                    (Type::Array(_), _, _) => self
                        .errors
                        .push(type_error(s.pos, "array declarations take a length and no initializer")),
                    (t, None, Some(init)) => self.expect(init, *t, "initializer"),
                    (_, None, None) => {}
                    (_, Some(_), _) => self.errors.push(type_error(s.pos, "only arrays take a length")),
                }
                self.declare(name, *ty, false, s.pos);
            }
            StmtKind::Assign { name, value } => match self.lookup(name) {
                None => self
                    .errors
                    .push(type_error(s.pos, format!("unknown variable `{name}`"))),
                Some(v) if v.induction => self
                    .errors
                    .push(type_error(s.pos, format!("loop variable `{name}` cannot be assigned"))),
                Some(v) if !v.ty.is_scalar() => self
                    .errors
                    .push(type_error(s.pos, format!("array `{name}` cannot be reassigned"))),
                Some(v) => self.expect(value, v.ty, "assigned value"),
            },
            StmtKind::IndexAssign { name, index, value } => match self.lookup(name).and_then(|v| v.ty.elem()) {
                None => self
                    .errors
                    .push(type_error(s.pos, format!("`{name}` is not a declared array"))),
                Some(elem) => {
                    self.expect(index, Type::Int, "array index");
                    self.expect(value, elem, "stored value");
                }
            },
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                self.expect(cond, Type::Bool, "condition");
                self.block(then_block);
                if let Some(b) = else_block {
                    self.block(b);
                }
            }
            StmtKind::While { cond, body } => {
                self.expect(cond, Type::Bool, "condition");
                self.block(body);
            }
            StmtKind::For {
                var,
                lower,
                upper,
                step,
                body,
            } => {
                self.expect(lower, Type::Int, "loop bound");
                self.expect(upper, Type::Int, "loop bound");
                if let Some(step) = step {
                    self.expect(step, Type::Int, "loop step");
                }
                self.scopes.push(HashMap::new());
                self.declare(var, Type::Int, true, s.pos);
                self.block(body);
                self.scopes.pop();
            }
            StmtKind::Block(b) => self.block(b),
            StmtKind::Call { name, args } => {
                let types: Option<Vec<Type>> = args.iter().map(|a| self.expr(a)).collect();
                if let Some(types) = types {
                    if let Err(m) = call_type(name, &types, self.sigs) {
                        self.errors.push(type_error(s.pos, m));
                    }
                }
            }
            StmtKind::Return(value) => match (value, self.ret) {
                (None, None) => {}
                (Some(e), Some(t)) => self.expect(e, t, "returned value"),
                (None, Some(t)) => self
                    .errors
                    .push(type_error(s.pos, format!("missing return value of type {t}"))),
                (Some(_), None) => self
                    .errors
                    .push(type_error(s.pos, "function without a return type returns a value")),
            },
            StmtKind::Print(args) => {
                for a in args {
                    if let Some(t) = self.expr(a) {
                        if !t.is_scalar() {
                            self.errors.push(type_error(a.pos, "cannot print an array"));
                        }
                    }
                }
            }
            StmtKind::Fork { .. } => {}
        }
    }
}

/// Type checks a whole program, reporting every error found.
pub fn check_program(program: &Program) -> Result<(), Diagnostics> {
    let sigs = Signatures::of(program);
    let mut errors = Vec::new();

    let mut seen: HashMap<&str, Pos> = HashMap::new();
    let decls = program
        .externs
        .iter()
        .map(|e| (e.name.as_str(), e.pos))
        .chain(program.functions.iter().map(|f| (f.name.as_str(), f.pos)));
    for (name, pos) in decls {
        if BUILTINS.contains(&name) {
            errors.push(type_error(pos, format!("`{name}` is a builtin")));
        }
        if seen.insert(name, pos).is_some() {
            errors.push(type_error(pos, format!("`{name}` is defined more than once")));
        }
    }
    match program
        .functions
        .iter()
        .filter(|f| f.name == "main")
        .collect::<Vec<_>>()
        .as_slice()
    {
        [] => errors.push(type_error(Pos::new(1, 1), "program has no `main` function")),
        [main] => {
            if !main.params.is_empty() {
                errors.push(type_error(main.pos, "`main` takes no parameters"));
            }
            if !matches!(main.ret, None | Some(Type::Int)) {
                errors.push(type_error(main.pos, "`main` returns nothing or int"));
            }
        }
        _ => {}
    }

    for f in &program.functions {
        let mut checker = Checker {
            sigs: &sigs,
            scopes: vec![HashMap::new()],
            ret: f.ret,
            errors: Vec::new(),
        };
        for p in &f.params {
            checker.declare(&p.name, p.ty, false, f.pos);
        }
        checker.block(&f.body);
        errors.extend(checker.errors);
    }

    if errors.is_empty() {
        Ok(())
    } else {
        Err(Diagnostics(errors).sorted())
    }
}
