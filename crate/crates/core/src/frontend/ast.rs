//! Syntax tree for MK programs.
//!
//! The same tree is used before and after lowering. Lowering removes every
//! attached directive and introduces [`StmtKind::Fork`] nodes in their place.

use std::fmt;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Pos {
    pub line: u32,
    pub column: u32,
}

impl Pos {
    pub const fn new(line: u32, column: u32) -> Self {
        Self { line, column }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElemType {
    Int,
    Float,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Type {
    Int,
    Float,
    Bool,
    Array(ElemType),
}

impl Type {
    pub fn is_scalar(self) -> bool {
        !matches!(self, Type::Array(_))
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, Type::Int | Type::Float)
    }

    pub fn elem(self) -> Option<Type> {
        match self {
            Type::Array(ElemType::Int) => Some(Type::Int),
            Type::Array(ElemType::Float) => Some(Type::Float),
            _ => None,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => f.write_str("int"),
            Type::Float => f.write_str("float"),
            Type::Bool => f.write_str("bool"),
            Type::Array(ElemType::Int) => f.write_str("[int]"),
            Type::Array(ElemType::Float) => f.write_str("[float]"),
        }
    }
}

/// Calling convention of an extern declaration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Abi {
    Native,
    Fortran,
}

impl fmt::Display for Abi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Abi::Native => f.write_str("native"),
            Abi::Fortran => f.write_str("fortran"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub externs: Vec<ExternDecl>,
    pub functions: Vec<FunctionDecl>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// Resets every position to the default so trees can be compared
    /// structurally.
    pub fn clear_positions(&mut self) {
        for e in &mut self.externs {
            e.pos = Pos::default();
        }
        for f in &mut self.functions {
            f.pos = Pos::default();
            f.body.clear_positions();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: Type,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternDecl {
    pub name: String,
    pub abi: Abi,
    pub params: Vec<Param>,
    pub ret: Option<Type>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub ret: Option<Type>,
    pub body: Block,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Block {
    pub stmts: Vec<Stmt>,
}

impl Block {
    pub fn new(stmts: Vec<Stmt>) -> Self {
        Self { stmts }
    }

    pub fn clear_positions(&mut self) {
        for s in &mut self.stmts {
            s.clear_positions();
        }
    }
}

/// One `//#omp` comment line, with the sentinel stripped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDirective {
    pub text: String,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub pos: Pos,
    /// Directive comment lines attached to this statement, in source order.
    pub directives: Vec<RawDirective>,
}

impl Stmt {
    pub fn new(kind: StmtKind, pos: Pos) -> Self {
        Self {
            kind,
            pos,
            directives: Vec::new(),
        }
    }

    /// The attached directive text, consecutive comment lines joined by a
    /// single space.
    pub fn attached_directive(&self) -> Option<String> {
        if self.directives.is_empty() {
            return None;
        }
        let parts: Vec<&str> = self.directives.iter().map(|d| d.text.trim()).collect();
        Some(parts.join(" "))
    }

    pub fn clear_positions(&mut self) {
        self.pos = Pos::default();
        for d in &mut self.directives {
            d.pos = Pos::default();
        }
        match &mut self.kind {
            StmtKind::Let { len, init, .. } => {
                if let Some(e) = len {
                    e.clear_positions();
                }
                if let Some(e) = init {
                    e.clear_positions();
                }
            }
            StmtKind::Assign { value, .. } => value.clear_positions(),
            StmtKind::IndexAssign { index, value, .. } => {
                index.clear_positions();
                value.clear_positions();
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                cond.clear_positions();
                then_block.clear_positions();
                if let Some(b) = else_block {
                    b.clear_positions();
                }
            }
            StmtKind::While { cond, body } => {
                cond.clear_positions();
                body.clear_positions();
            }
            StmtKind::For {
                lower,
                upper,
                step,
                body,
                ..
            } => {
                lower.clear_positions();
                upper.clear_positions();
                if let Some(s) = step {
                    s.clear_positions();
                }
                body.clear_positions();
            }
            StmtKind::Block(b) => b.clear_positions(),
            StmtKind::Call { args, .. } | StmtKind::Print(args) => {
                for a in args {
                    a.clear_positions();
                }
            }
            StmtKind::Return(v) => {
                if let Some(e) = v {
                    e.clear_positions();
                }
            }
            StmtKind::Fork { .. } => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    /// `let x: int = e;` or `let a: [float; n];`
    Let {
        name: String,
        ty: Type,
        len: Option<Expr>,
        init: Option<Expr>,
    },
    Assign {
        name: String,
        value: Expr,
    },
    IndexAssign {
        name: String,
        index: Expr,
        value: Expr,
    },
    If {
        cond: Expr,
        then_block: Block,
        else_block: Option<Block>,
    },
    While {
        cond: Expr,
        body: Block,
    },
    /// `for i in lower..upper [step s] { ... }`
    For {
        var: String,
        lower: Expr,
        upper: Expr,
        step: Option<Expr>,
        body: Block,
    },
    Block(Block),
    Call {
        name: String,
        args: Vec<Expr>,
    },
    Return(Option<Expr>),
    Print(Vec<Expr>),
    /// Hand-off to an outlined region. `args` are the captured names in slot
    /// order followed by other names read by the loop bounds. Only produced
    /// by lowering.
    Fork {
        region: usize,
        args: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Rem => "%",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "&&",
            BinaryOp::Or => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq | BinaryOp::Ne => 3,
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 4,
            BinaryOp::Add | BinaryOp::Sub => 5,
            BinaryOp::Mul | BinaryOp::Div | BinaryOp::Rem => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

impl Expr {
    pub fn new(kind: ExprKind, pos: Pos) -> Self {
        Self { kind, pos }
    }

    pub fn clear_positions(&mut self) {
        self.pos = Pos::default();
        match &mut self.kind {
            ExprKind::Index { index, .. } => index.clear_positions(),
            ExprKind::Unary { operand, .. } => operand.clear_positions(),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.clear_positions();
                rhs.clear_positions();
            }
            ExprKind::Call { args, .. } => {
                for a in args {
                    a.clear_positions();
                }
            }
            ExprKind::Cast { operand, .. } => operand.clear_positions(),
            ExprKind::Int(_) | ExprKind::Float(_) | ExprKind::Bool(_) | ExprKind::Var(_) => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Float(f64),
    Bool(bool),
    Var(String),
    Index {
        name: String,
        index: Box<Expr>,
    },
    Unary {
        op: UnaryOp,
        operand: Box<Expr>,
    },
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    /// User function, extern, or builtin call.
    Call {
        name: String,
        args: Vec<Expr>,
    },
    /// `int(e)` / `float(e)`
    Cast {
        to: Type,
        operand: Box<Expr>,
    },
}

/// Calls `f` on every expression nested in `block`, outermost first.
pub fn walk_block_exprs<'a>(block: &'a Block, f: &mut dyn FnMut(&'a Expr)) {
    for s in &block.stmts {
        walk_stmt_exprs(s, f);
    }
}

pub fn walk_stmt_exprs<'a>(stmt: &'a Stmt, f: &mut dyn FnMut(&'a Expr)) {
    match &stmt.kind {
        StmtKind::Let { len, init, .. } => {
            for e in [len, init].into_iter().flatten() {
                walk_expr(e, f);
            }
        }
        StmtKind::Assign { value, .. } => walk_expr(value, f),
        StmtKind::IndexAssign { index, value, .. } => {
            walk_expr(index, f);
            walk_expr(value, f);
        }
        StmtKind::If {
            cond,
            then_block,
            else_block,
        } => {
            walk_expr(cond, f);
            walk_block_exprs(then_block, f);
            if let Some(b) = else_block {
                walk_block_exprs(b, f);
            }
        }
        StmtKind::While { cond, body } => {
            walk_expr(cond, f);
            walk_block_exprs(body, f);
        }
        StmtKind::For {
            lower,
            upper,
            step,
            body,
            ..
        } => {
            walk_expr(lower, f);
            walk_expr(upper, f);
            if let Some(s) = step {
                walk_expr(s, f);
            }
            walk_block_exprs(body, f);
        }
        StmtKind::Block(b) => walk_block_exprs(b, f),
        StmtKind::Call { args, .. } | StmtKind::Print(args) => {
            for a in args {
                walk_expr(a, f);
            }
        }
        StmtKind::Return(v) => {
            if let Some(e) = v {
                walk_expr(e, f);
            }
        }
        StmtKind::Fork { .. } => {}
    }
}

pub fn walk_expr<'a>(expr: &'a Expr, f: &mut dyn FnMut(&'a Expr)) {
    f(expr);
    match &expr.kind {
        ExprKind::Index { index, .. } => walk_expr(index, f),
        ExprKind::Unary { operand, .. } | ExprKind::Cast { operand, .. } => walk_expr(operand, f),
        ExprKind::Binary { lhs, rhs, .. } => {
            walk_expr(lhs, f);
            walk_expr(rhs, f);
        }
        ExprKind::Call { args, .. } => {
            for a in args {
                walk_expr(a, f);
            }
        }
        ExprKind::Int(_) | ExprKind::Float(_) | ExprKind::Bool(_) | ExprKind::Var(_) => {}
    }
}
