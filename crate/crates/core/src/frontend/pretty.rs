//! Canonical source printer. Output reparses to the same tree.

use std::fmt::Write;

use crate::frontend::ast::*;

const INDENT: &str = "    ";

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for e in &p.externs {
        let abi = match e.abi {
            Abi::Fortran => "fortran ",
            Abi::Native => "",
        };
        let _ = writeln!(out, "extern {abi}fn {};", signature(&e.name, &e.params, e.ret));
    }
    if !p.externs.is_empty() && !p.functions.is_empty() {
        out.push('\n');
    }
    for (i, f) in p.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(out, "fn {} ", signature(&f.name, &f.params, f.ret));
        print_block(&mut out, &f.body, 0);
        out.push('\n');
    }
    out
}

fn signature(name: &str, params: &[Param], ret: Option<Type>) -> String {
    let params: Vec<String> = params.iter().map(|p| format!("{}: {}", p.name, p.ty)).collect();
    match ret {
        Some(t) => format!("{name}({}) -> {t}", params.join(", ")),
        None => format!("{name}({})", params.join(", ")),
    }
}

pub fn print_block(out: &mut String, block: &Block, depth: usize) {
    if block.stmts.is_empty() {
        out.push_str("{}");
        return;
    }
    out.push_str("{\n");
    for s in &block.stmts {
        print_stmt(out, s, depth + 1);
    }
    out.push_str(&INDENT.repeat(depth));
    out.push('}');
}

pub fn print_stmt(out: &mut String, stmt: &Stmt, depth: usize) {
    let pad = INDENT.repeat(depth);
    for d in &stmt.directives {
        let _ = writeln!(out, "{pad}//#omp {}", d.text.trim());
    }
    out.push_str(&pad);
    match &stmt.kind {
        StmtKind::Let { name, ty, len, init } => match (ty, len) {
            (Type::Array(elem), Some(len)) => {
                let elem = if *elem == ElemType::Int { "int" } else { "float" };
                let _ = write!(out, "let {name}: [{elem}; {}];", print_expr(len));
            }
            _ => match init {
                Some(e) => {
                    let _ = write!(out, "let {name}: {ty} = {};", print_expr(e));
                }
                None => {
                    let _ = write!(out, "let {name}: {ty};");
                }
            },
        },
        StmtKind::Assign { name, value } => {
            let _ = write!(out, "{name} = {};", print_expr(value));
        }
        StmtKind::IndexAssign { name, index, value } => {
            let _ = write!(out, "{name}[{}] = {};", print_expr(index), print_expr(value));
        }
        StmtKind::If {
            cond,
            then_block,
            else_block,
        } => {
            let _ = write!(out, "if {} ", print_expr(cond));
            print_block(out, then_block, depth);
            if let Some(b) = else_block {
                out.push_str(" else ");
                print_block(out, b, depth);
            }
        }
        StmtKind::While { cond, body } => {
            let _ = write!(out, "while {} ", print_expr(cond));
            print_block(out, body, depth);
        }
        StmtKind::For {
            var,
            lower,
            upper,
            step,
            body,
        } => {
            let _ = write!(out, "for {var} in {}..{}", print_expr(lower), print_expr(upper));
            if let Some(s) = step {
                let _ = write!(out, " step {}", print_expr(s));
            }
            out.push(' ');
            print_block(out, body, depth);
        }
        StmtKind::Block(b) => print_block(out, b, depth),
        StmtKind::Call { name, args } => {
            let _ = write!(out, "{name}({});", print_args(args));
        }
        StmtKind::Return(v) => match v {
            Some(e) => {
                let _ = write!(out, "return {};", print_expr(e));
            }
            None => out.push_str("return;"),
        },
        StmtKind::Print(args) => {
            let _ = write!(out, "print({});", print_args(args));
        }
        StmtKind::Fork { region, args } => {
            // Not MK syntax; only appears in dumps of lowered programs.
            let _ = write!(out, "__fork region#{region}({});", args.join(", "));
        }
    }
    out.push('\n');
}

fn print_args(args: &[Expr]) -> String {
    args.iter().map(print_expr).collect::<Vec<_>>().join(", ")
}

pub fn print_expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Int(v) => v.to_string(),
        ExprKind::Float(v) => format!("{v:?}"),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Var(n) => n.clone(),
        ExprKind::Index { name, index } => format!("{name}[{}]", print_expr(index)),
        ExprKind::Unary { op, operand } => {
            let sym = match op {
                UnaryOp::Neg => "-",
                UnaryOp::Not => "!",
            };
            if matches!(operand.kind, ExprKind::Binary { .. }) {
                format!("{sym}({})", print_expr(operand))
            } else {
                format!("{sym}{}", print_expr(operand))
            }
        }
        ExprKind::Binary { op, lhs, rhs } => {
            let prec = op.precedence();
            let l = match &lhs.kind {
                ExprKind::Binary { op: lop, .. } if lop.precedence() < prec => {
                    format!("({})", print_expr(lhs))
                }
                _ => print_expr(lhs),
            };
            let r = match &rhs.kind {
                ExprKind::Binary { op: rop, .. } if rop.precedence() <= prec => {
                    format!("({})", print_expr(rhs))
                }
                _ => print_expr(rhs),
            };
            format!("{l} {} {r}", op.symbol())
        }
        ExprKind::Call { name, args } => format!("{name}({})", print_args(args)),
        ExprKind::Cast { to, operand } => format!("{to}({})", print_expr(operand)),
    }
}
