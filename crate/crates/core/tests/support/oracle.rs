//! Serial reference interpreter. Walks the parsed tree directly, ignores
//! every directive, and shares nothing with the lowering or execution code.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use miniomp_core::frontend::ast::*;

#[derive(Debug, Clone)]
enum V {
    I(i64),
    F(f64),
    B(bool),
    A(Rc<RefCell<Vec<V>>>),
    Unit,
}

impl V {
    fn i(&self) -> i64 {
        match self {
            V::I(v) => *v,
            other => panic!("expected int, got {other:?}"),
        }
    }
    fn f(&self) -> f64 {
        match self {
            V::F(v) => *v,
            other => panic!("expected float, got {other:?}"),
        }
    }
    fn b(&self) -> bool {
        match self {
            V::B(v) => *v,
            other => panic!("expected bool, got {other:?}"),
        }
    }
    fn arr(&self) -> Rc<RefCell<Vec<V>>> {
        match self {
            V::A(a) => a.clone(),
            other => panic!("expected array, got {other:?}"),
        }
    }
    fn show(&self) -> String {
        match self {
            V::I(v) => v.to_string(),
            V::F(v) => format!("{v:?}"),
            V::B(v) => v.to_string(),
            V::A(_) | V::Unit => panic!("not printable"),
        }
    }
}

enum Ctl {
    Go,
    Ret(V),
}

struct Env {
    scopes: Vec<HashMap<String, V>>,
}

impl Env {
    fn get(&self, n: &str) -> V {
        self.scopes
            .iter()
            .rev()
            .find_map(|s| s.get(n))
            .cloned()
            .unwrap_or_else(|| panic!("unbound {n}"))
    }
    fn set(&mut self, n: &str, v: V) {
        for s in self.scopes.iter_mut().rev() {
            if let Some(slot) = s.get_mut(n) {
                *slot = v;
                return;
            }
        }
        panic!("unbound {n}");
    }
    fn def(&mut self, n: &str, v: V) {
        self.scopes.last_mut().unwrap().insert(n.to_string(), v);
    }
}

pub struct Oracle<'p> {
    program: &'p Program,
    out: String,
}

fn mix(x: i64) -> i64 {
    let mut z = (x as u64).wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    (z ^ (z >> 31)) as i64
}

fn zero(ty: Type) -> V {
    match ty {
        Type::Int => V::I(0),
        Type::Float => V::F(0.0),
        Type::Bool => V::B(false),
        Type::Array(_) => panic!("arrays have no scalar zero"),
    }
}

/// Runs `main` serially and returns the printed text, or a trap message.
pub fn run_serial(program: &Program) -> Result<String, String> {
    let mut o = Oracle {
        program,
        out: String::new(),
    };
    o.call("main", vec![])?;
    Ok(o.out)
}

impl<'p> Oracle<'p> {
    fn call(&mut self, name: &str, args: Vec<V>) -> Result<V, String> {
        if let Some(f) = self.program.functions.iter().find(|f| f.name == name) {
            let mut env = Env {
                scopes: vec![f.params.iter().map(|p| p.name.clone()).zip(args).collect()],
            };
            return match self.block(&f.body, &mut env)? {
                Ctl::Ret(v) => Ok(v),
                Ctl::Go if f.ret.is_some() => Err(format!("{name} fell off the end")),
                Ctl::Go => Ok(V::Unit),
            };
        }
        if let Some(e) = self.program.externs.iter().find(|e| e.name == name) {
            return match (e.name.as_str(), e.abi, args.as_slice()) {
                ("dcopy", Abi::Fortran, [n, x, y]) => {
                    let (x, y) = (x.arr(), y.arr());
                    for i in 0..n.i() as usize {
                        let v = x.borrow()[i].clone();
                        y.borrow_mut()[i] = v;
                    }
                    Ok(V::Unit)
                }
                ("wtime", Abi::Fortran, []) => Ok(V::F(
                    std::time::SystemTime::now()
                        .duration_since(std::time::UNIX_EPOCH)
                        .unwrap()
                        .as_secs_f64(),
                )),
                _ => Err(format!("unresolved extern {name}")),
            };
        }
        builtin(name, &args)
    }

    fn block(&mut self, b: &Block, env: &mut Env) -> Result<Ctl, String> {
        env.scopes.push(HashMap::new());
        let mut r = Ok(Ctl::Go);
        for s in &b.stmts {
            match self.stmt(s, env) {
                Ok(Ctl::Go) => {}
                other => {
                    r = other;
                    break;
                }
            }
        }
        env.scopes.pop();
        r
    }

    fn stmt(&mut self, s: &Stmt, env: &mut Env) -> Result<Ctl, String> {
        match &s.kind {
            StmtKind::Let { name, ty, len, init } => {
                let v = match (ty, len, init) {
                    (Type::Array(e), Some(n), _) => {
                        let n = self.expr(n, env)?.i();
                        if n < 0 {
                            return Err("negative length".into());
                        }
                        let z = match e {
                            ElemType::Int => V::I(0),
                            ElemType::Float => V::F(0.0),
                        };
                        V::A(Rc::new(RefCell::new(vec![z; n as usize])))
                    }
                    (_, _, Some(e)) => self.expr(e, env)?,
                    (t, _, None) => zero(*t),
                };
                env.def(name, v);
            }
            StmtKind::Assign { name, value } => {
                let v = self.expr(value, env)?;
                env.set(name, v);
            }
            StmtKind::IndexAssign { name, index, value } => {
                let i = self.expr(index, env)?.i();
                let v = self.expr(value, env)?;
                let a = env.get(name).arr();
                let mut a = a.borrow_mut();
                let len = a.len();
                *a.get_mut(usize::try_from(i).map_err(|_| "index")?)
                    .ok_or(format!("index {i} of {len}"))? = v;
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                if self.expr(cond, env)?.b() {
                    return self.block(then_block, env);
                } else if let Some(e) = else_block {
                    return self.block(e, env);
                }
            }
            StmtKind::While { cond, body } => {
                while self.expr(cond, env)?.b() {
                    if let Ctl::Ret(v) = self.block(body, env)? {
                        return Ok(Ctl::Ret(v));
                    }
                }
            }
            StmtKind::For {
                var,
                lower,
                upper,
                step,
                body,
            } => {
                let lo = self.expr(lower, env)?.i();
                let hi = self.expr(upper, env)?.i();
                let st = match step {
                    Some(e) => self.expr(e, env)?.i(),
                    None => 1,
                };
                if st < 1 {
                    return Err("bad step".into());
                }
                let mut i = lo;
                while i < hi {
                    env.scopes.push(HashMap::from([(var.clone(), V::I(i))]));
                    let r = self.block(body, env);
                    env.scopes.pop();
                    if let Ctl::Ret(v) = r? {
                        return Ok(Ctl::Ret(v));
                    }
                    i = match i.checked_add(st) {
                        Some(n) => n,
                        None => break,
                    };
                }
            }
            StmtKind::Block(b) => return self.block(b, env),
            StmtKind::Call { name, args } => {
                let args = args.iter().map(|a| self.expr(a, env)).collect::<Result<Vec<_>, _>>()?;
                self.call(name, args)?;
            }
            StmtKind::Return(v) => {
                let v = match v {
                    Some(e) => self.expr(e, env)?,
                    None => V::Unit,
                };
                return Ok(Ctl::Ret(v));
            }
            StmtKind::Print(args) => {
                let parts = args
                    .iter()
                    .map(|a| self.expr(a, env).map(|v| v.show()))
                    .collect::<Result<Vec<_>, _>>()?;
                self.out.push_str(&parts.join(" "));
                self.out.push('\n');
            }
            StmtKind::Fork { .. } => return Err("the oracle runs unlowered programs only".into()),
        }
        Ok(Ctl::Go)
    }

    fn expr(&mut self, e: &Expr, env: &mut Env) -> Result<V, String> {
        Ok(match &e.kind {
            ExprKind::Int(v) => V::I(*v),
            ExprKind::Float(v) => V::F(*v),
            ExprKind::Bool(v) => V::B(*v),
            ExprKind::Var(n) => env.get(n),
            ExprKind::Index { name, index } => {
                let i = self.expr(index, env)?.i();
                let a = env.get(name).arr();
                let a = a.borrow();
                usize::try_from(i)
                    .ok()
                    .and_then(|i| a.get(i).cloned())
                    .ok_or(format!("index {i} of {}", a.len()))?
            }
            ExprKind::Unary { op, operand } => match (op, self.expr(operand, env)?) {
                (UnaryOp::Neg, V::I(v)) => V::I(v.checked_neg().ok_or("overflow")?),
                (UnaryOp::Neg, V::F(v)) => V::F(-v),
                (UnaryOp::Not, V::B(v)) => V::B(!v),
                _ => return Err("bad unary".into()),
            },
            ExprKind::Binary { op, lhs, rhs } => {
                if matches!(op, BinaryOp::And | BinaryOp::Or) {
                    let l = self.expr(lhs, env)?.b();
                    return Ok(V::B(match op {
                        BinaryOp::And => l && self.expr(rhs, env)?.b(),
                        _ => l || self.expr(rhs, env)?.b(),
                    }));
                }
                let l = self.expr(lhs, env)?;
                let r = self.expr(rhs, env)?;
                binop(*op, l, r)?
            }
            ExprKind::Call { name, args } => {
                if name == "len" {
                    let a = self.expr(&args[0], env)?.arr();
                    let n = a.borrow().len();
                    return Ok(V::I(n as i64));
                }
                let args = args.iter().map(|a| self.expr(a, env)).collect::<Result<Vec<_>, _>>()?;
                self.call(name, args)?
            }
            ExprKind::Cast { to, operand } => match (to, self.expr(operand, env)?) {
                (Type::Int, V::I(v)) => V::I(v),
                (Type::Float, V::F(v)) => V::F(v),
                (Type::Float, V::I(v)) => V::F(v as f64),
                (Type::Int, V::F(v)) => {
                    if !v.is_finite() || v >= 9.3e18 || v <= -9.3e18 {
                        return Err("conversion".into());
                    }
                    V::I(v.trunc() as i64)
                }
                _ => return Err("bad cast".into()),
            },
        })
    }
}

fn binop(op: BinaryOp, l: V, r: V) -> Result<V, String> {
    use BinaryOp::*;
    Ok(match (l, r) {
        (V::I(a), V::I(b)) => match op {
            Add => V::I(a.checked_add(b).ok_or("overflow")?),
            Sub => V::I(a.checked_sub(b).ok_or("overflow")?),
            Mul => V::I(a.checked_mul(b).ok_or("overflow")?),
            Div => V::I(a.checked_div(b).ok_or("division")?),
            Rem => V::I(a.checked_rem(b).ok_or("division")?),
            Eq => V::B(a == b),
            Ne => V::B(a != b),
            Lt => V::B(a < b),
            Le => V::B(a <= b),
            Gt => V::B(a > b),
            Ge => V::B(a >= b),
            And | Or => unreachable!(),
        },
        (V::F(a), V::F(b)) => match op {
            Add => V::F(a + b),
            Sub => V::F(a - b),
            Mul => V::F(a * b),
            Div => V::F(a / b),
            Eq => V::B(a == b),
            Ne => V::B(a != b),
            Lt => V::B(a < b),
            Le => V::B(a <= b),
            Gt => V::B(a > b),
            Ge => V::B(a >= b),
            _ => return Err("bad float op".into()),
        },
        (V::B(a), V::B(b)) => match op {
            Eq => V::B(a == b),
            Ne => V::B(a != b),
            _ => return Err("bad bool op".into()),
        },
        _ => return Err("mismatched operands".into()),
    })
}

fn builtin(name: &str, args: &[V]) -> Result<V, String> {
    Ok(match (name, args) {
        ("sqrt", [x]) => V::F(x.f().sqrt()),
        ("floor", [x]) => V::F(x.f().floor()),
        ("log", [x]) => V::F(x.f().ln()),
        ("abs", [V::I(v)]) => V::I(v.checked_abs().ok_or("overflow")?),
        ("abs", [V::F(v)]) => V::F(v.abs()),
        ("min", [V::I(a), V::I(b)]) => V::I(*a.min(b)),
        ("max", [V::I(a), V::I(b)]) => V::I(*a.max(b)),
        ("min", [V::F(a), V::F(b)]) => V::F(a.min(*b)),
        ("max", [V::F(a), V::F(b)]) => V::F(a.max(*b)),
        ("split_seed", [x]) => V::I(mix(x.i())),
        ("rand_uniform", [x]) => V::F(((mix(x.i()) as u64) >> 11) as f64 / 9007199254740992.0),
        ("tid", []) => V::I(0),
        ("num_threads", []) => V::I(1),
        ("now_seconds", []) => V::F(0.0),
        _ => return Err(format!("unknown builtin {name}")),
    })
}
