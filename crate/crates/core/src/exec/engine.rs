//! Closure compiler and executor for lowered programs.
//!
//! Every function and outlined region is compiled once into a tree of typed
//! closures operating on a [`Frame`] of numbered slots. Scalars live in plain
//! words unless a region shares them, in which case they live in an
//! atomically accessed cell that all team members reference.

use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use super::externs::{bind_extern, wall_seconds, ExternFn, ExternRegistry};
use super::trap::Trap;
use super::value::{ArrayRef, Value, MAX_ARRAY_LEN};
use crate::directives::{DirectiveKind, ReduceOp, ScheduleKind};
use crate::frontend::ast::*;
use crate::runtime::{
    in_team, reduction_identity, run_team, static_chunks, IterationChunk, LoopDispatch, ReductionTable, Runtime,
    Scalar, ScalarKind, TeamContext,
};
use crate::transform::{CaptureMode, LoweredProgram};

type R<T> = Result<T, Trap>;
type Ev<T> = Box<dyn Fn(&mut Frame, &Thread<'_>) -> R<T> + Send + Sync>;
type St = Ev<Flow>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flow {
    Next,
    Return,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Loc {
    Local(usize),
    Cell(usize),
    Arr(usize),
}

#[derive(Debug, Clone, Copy, Default)]
struct Layout {
    locals: usize,
    cells: usize,
    arrays: usize,
}

/// Storage of one function invocation or one member's region body.
pub(crate) struct Frame {
    s: Vec<u64>,
    c: Vec<Arc<AtomicU64>>,
    a: Vec<ArrayRef>,
    ret: u64,
}

impl Frame {
    fn new(layout: &Layout, empty: &ArrayRef) -> Self {
        Self {
            s: vec![0; layout.locals],
            c: (0..layout.cells).map(|_| Arc::new(AtomicU64::new(0))).collect(),
            a: vec![empty.clone(); layout.arrays],
            ret: 0,
        }
    }

    #[inline]
    fn get(&self, loc: Loc) -> u64 {
        match loc {
            Loc::Local(i) => self.s[i],
            Loc::Cell(i) => self.c[i].load(Ordering::Relaxed),
            Loc::Arr(_) => unreachable!("array slot read as a word"),
        }
    }

    #[inline]
    fn set(&mut self, loc: Loc, bits: u64) {
        match loc {
            Loc::Local(i) => self.s[i] = bits,
            Loc::Cell(i) => self.c[i].store(bits, Ordering::Relaxed),
            Loc::Arr(_) => unreachable!("array slot written as a word"),
        }
    }
}

/// Destination of `print` output; each call writes one whole line.
pub(crate) struct Output {
    text: Mutex<String>,
    echo: bool,
}

impl Output {
    pub(crate) fn new(echo: bool) -> Self {
        Self {
            text: Mutex::new(String::new()),
            echo,
        }
    }

    fn line(&self, line: &str) {
        if self.echo {
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{line}");
        } else {
            let mut t = self.text.lock().unwrap_or_else(|e| e.into_inner());
            t.push_str(line);
            t.push('\n');
        }
    }

    pub(crate) fn take(&self) -> String {
        std::mem::take(&mut *self.text.lock().unwrap_or_else(|e| e.into_inner()))
    }
}

/// Per-thread execution context.
pub(crate) struct Thread<'a> {
    prog: &'a Compiled,
    rt: &'a Runtime,
    out: &'a Output,
    tid: usize,
    team: Option<&'a TeamContext>,
    /// Number of worksharing constructs this member has reached in its team.
    seq: Cell<usize>,
}

impl<'a> Thread<'a> {
    pub(crate) fn host(prog: &'a Compiled, rt: &'a Runtime, out: &'a Output) -> Self {
        Self {
            prog,
            rt,
            out,
            tid: 0,
            team: None,
            seq: Cell::new(0),
        }
    }
}

struct FnUnit {
    name: String,
    layout: Layout,
    params: Vec<Loc>,
    body: St,
    returns: bool,
}

#[derive(Debug, Clone, Copy)]
struct CapSlot {
    dst: Loc,
    mode: CaptureMode,
    ty: Type,
}

struct RegionUnit {
    layout: Layout,
    body: St,
    captures: Vec<CapSlot>,
    /// Capture index, operator and kind of each reduction capture.
    reductions: Vec<(usize, ReduceOp, ScalarKind)>,
    var: Option<Loc>,
    schedule: ScheduleKind,
    chunk: Option<u64>,
    num_threads: Option<u32>,
}

impl RegionUnit {
    fn partials(&self, mf: &Frame) -> Vec<Scalar> {
        self.reductions
            .iter()
            .map(|&(ci, _, kind)| scalar_of(kind, mf.get(self.captures[ci].dst)))
            .collect()
    }

    fn table(&self, size: usize) -> ReductionTable {
        ReductionTable::new(size, self.reductions.iter().map(|&(_, op, k)| (op, k)).collect())
    }
}

/// A lowered program ready to execute.
pub(crate) struct Compiled {
    functions: Vec<FnUnit>,
    regions: Vec<RegionUnit>,
    main: usize,
    empty: ArrayRef,
}

impl Compiled {
    /// Runs `main` on the calling thread and returns its exit value.
    pub(crate) fn run_main(&self, rt: &Runtime, out: &Output) -> R<i64> {
        let t = Thread::host(self, rt, out);
        let main = &self.functions[self.main];
        let mut f = Frame::new(&main.layout, &self.empty);
        match (main.body)(&mut f, &t)? {
            Flow::Return if main.returns => Ok(f.ret as i64),
            Flow::Next if main.returns => Err(Trap::MissingReturn {
                function: main.name.clone(),
            }),
            _ => Ok(0),
        }
    }
}

fn scalar_of(kind: ScalarKind, bits: u64) -> Scalar {
    match kind {
        ScalarKind::Int => Scalar::Int(bits as i64),
        ScalarKind::Float => Scalar::Float(f64::from_bits(bits)),
    }
}

fn bits_of(s: Scalar) -> u64 {
    match s {
        Scalar::Int(v) => v as u64,
        Scalar::Float(v) => v.to_bits(),
    }
}

fn kind_of(ty: Type) -> Option<ScalarKind> {
    match ty {
        Type::Int => Some(ScalarKind::Int),
        Type::Float => Some(ScalarKind::Float),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Compiled expressions

enum CE {
    I(Ev<i64>),
    F(Ev<f64>),
    B(Ev<bool>),
    A(Ev<ArrayRef>),
}

impl CE {
    fn ty_name(&self) -> &'static str {
        match self {
            CE::I(_) => "int",
            CE::F(_) => "float",
            CE::B(_) => "bool",
            CE::A(_) => "array",
        }
    }

    fn into_bits(self) -> Result<Ev<u64>, String> {
        Ok(match self {
            CE::I(e) => Box::new(move |f, t| e(f, t).map(|v| v as u64)),
            CE::F(e) => Box::new(move |f, t| e(f, t).map(f64::to_bits)),
            CE::B(e) => Box::new(move |f, t| e(f, t).map(u64::from)),
            CE::A(_) => return Err("array used where a scalar is required".into()),
        })
    }

    fn into_value(self) -> Ev<Value> {
        match self {
            CE::I(e) => Box::new(move |f, t| e(f, t).map(Value::Int)),
            CE::F(e) => Box::new(move |f, t| e(f, t).map(Value::Float)),
            CE::B(e) => Box::new(move |f, t| e(f, t).map(Value::Bool)),
            CE::A(e) => Box::new(move |f, t| e(f, t).map(Value::Array)),
        }
    }

    fn from_bits(ty: Type, e: Ev<u64>) -> CE {
        match ty {
            Type::Int => CE::I(Box::new(move |f, t| e(f, t).map(|b| b as i64))),
            Type::Float => CE::F(Box::new(move |f, t| e(f, t).map(f64::from_bits))),
            Type::Bool => CE::B(Box::new(move |f, t| e(f, t).map(|b| b != 0))),
            Type::Array(_) => unreachable!("calls do not return arrays"),
        }
    }
}

enum Arg {
    Word(Ev<u64>),
    Arr(Ev<ArrayRef>),
}

impl Arg {
    fn eval_value(&self, ty: Type, f: &mut Frame, t: &Thread<'_>) -> R<Value> {
        match self {
            Arg::Word(e) => e(f, t).map(|b| Value::from_bits(ty, b)),
            Arg::Arr(e) => e(f, t).map(Value::Array),
        }
    }
}

#[cold]
fn out_of_bounds(pos: Pos, name: &str, index: i64, len: usize) -> Trap {
    Trap::IndexOutOfBounds {
        pos,
        name: name.to_string(),
        index,
        len,
    }
}

fn float_to_int(v: f64, pos: Pos) -> R<i64> {
    // 2^63 is exactly representable; every finite value in [-2^63, 2^63)
    // truncates to a valid i64.
    const LIMIT: f64 = 9_223_372_036_854_775_808.0;
    if v.is_finite() && (-LIMIT..LIMIT).contains(&v) {
        Ok(v.trunc() as i64)
    } else {
        Err(Trap::InvalidConversion { pos, value: v })
    }
}

/// SplitMix64 output function: an avalanche hash of the input word.
pub fn split_seed(x: i64) -> i64 {
    let mut z = (x as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31)) as i64
}

/// Uniform value in `[0, 1)` derived from `seed`: the top 53 bits of
/// `split_seed(seed)` scaled by 2^-53.
pub fn rand_uniform(seed: i64) -> f64 {
    ((split_seed(seed) as u64) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

// ---------------------------------------------------------------------------
// Compiler

struct Ctx<'p> {
    lowered: &'p LoweredProgram,
    functions: HashMap<&'p str, usize>,
    externs: HashMap<&'p str, (&'p ExternDecl, Option<ExternFn>, String)>,
}

struct Unit<'c, 'p> {
    cx: &'c Ctx<'p>,
    scopes: Vec<HashMap<String, (Loc, Type)>>,
    layout: Layout,
    boxed: HashSet<String>,
}

/// Scalars captured by reference by any region forked directly from `b`.
fn shared_scalars(b: &Block, lowered: &LoweredProgram, out: &mut HashSet<String>) {
    for s in &b.stmts {
        match &s.kind {
            StmtKind::Fork { region, .. } => {
                if let Some(r) = lowered.regions.get(*region) {
                    for c in &r.captures {
                        if c.mode == CaptureMode::SharedRef && c.ty.is_scalar() {
                            out.insert(c.name.clone());
                        }
                    }
                }
            }
            StmtKind::If {
                then_block, else_block, ..
            } => {
                shared_scalars(then_block, lowered, out);
                if let Some(e) = else_block {
                    shared_scalars(e, lowered, out);
                }
            }
            StmtKind::While { body, .. } | StmtKind::For { body, .. } | StmtKind::Block(body) => {
                shared_scalars(body, lowered, out)
            }
            _ => {}
        }
    }
}

macro_rules! bin {
    ($variant:ident, $l:ident, $r:ident, |$a:ident, $b:ident| $body:expr) => {
        CE::$variant(Box::new(move |f, t| {
            let $a = $l(f, t)?;
            let $b = $r(f, t)?;
            $body
        }))
    };
}

macro_rules! un {
    ($variant:ident, $e:ident, |$a:ident| $body:expr) => {
        CE::$variant(Box::new(move |f, t| {
            let $a = $e(f, t)?;
            $body
        }))
    };
}

impl<'c, 'p> Unit<'c, 'p> {
    fn new(cx: &'c Ctx<'p>, body: &Block) -> Self {
        let mut boxed = HashSet::new();
        shared_scalars(body, cx.lowered, &mut boxed);
        Self {
            cx,
            scopes: vec![HashMap::new()],
            layout: Layout::default(),
            boxed,
        }
    }

    fn alloc(&mut self, ty: Type, force_cell: bool, name: &str) -> Loc {
        if !ty.is_scalar() {
            self.layout.arrays += 1;
            Loc::Arr(self.layout.arrays - 1)
        } else if force_cell || self.boxed.contains(name) {
            self.layout.cells += 1;
            Loc::Cell(self.layout.cells - 1)
        } else {
            self.layout.locals += 1;
            Loc::Local(self.layout.locals - 1)
        }
    }

    fn declare(&mut self, name: &str, ty: Type, force_cell: bool) -> Loc {
        let loc = self.alloc(ty, force_cell, name);
        self.scopes
            .last_mut()
            .expect("scope stack is never empty")
            .insert(name.to_string(), (loc, ty));
        loc
    }

    fn lookup(&self, name: &str) -> Result<(Loc, Type), String> {
        self.scopes
            .iter()
            .rev()
            .find_map(|s| s.get(name).copied())
            .ok_or_else(|| format!("unknown variable `{name}`"))
    }

    // -- expressions --------------------------------------------------------

    fn int(&mut self, e: &Expr) -> Result<Ev<i64>, String> {
        match self.expr(e)? {
            CE::I(x) => Ok(x),
            other => Err(format!("{}: expected int, found {}", e.pos, other.ty_name())),
        }
    }

    fn boolean(&mut self, e: &Expr) -> Result<Ev<bool>, String> {
        match self.expr(e)? {
            CE::B(x) => Ok(x),
            other => Err(format!("{}: expected bool, found {}", e.pos, other.ty_name())),
        }
    }

    fn bits(&mut self, e: &Expr) -> Result<Ev<u64>, String> {
        self.expr(e)?.into_bits()
    }

    fn arg(&mut self, e: &Expr) -> Result<Arg, String> {
        Ok(match self.expr(e)? {
            CE::A(a) => Arg::Arr(a),
            other => Arg::Word(other.into_bits()?),
        })
    }

    fn read_var(&self, name: &str) -> Result<CE, String> {
        let (loc, ty) = self.lookup(name)?;
        Ok(match (loc, ty) {
            (Loc::Arr(k), _) => CE::A(Box::new(move |f, _| Ok(f.a[k].clone()))),
            (Loc::Local(i), Type::Int) => CE::I(Box::new(move |f, _| Ok(f.s[i] as i64))),
            (Loc::Local(i), Type::Float) => CE::F(Box::new(move |f, _| Ok(f64::from_bits(f.s[i])))),
            (Loc::Local(i), _) => CE::B(Box::new(move |f, _| Ok(f.s[i] != 0))),
            (Loc::Cell(i), Type::Int) => CE::I(Box::new(move |f, _| Ok(f.c[i].load(Ordering::Relaxed) as i64))),
            (Loc::Cell(i), Type::Float) => {
                CE::F(Box::new(move |f, _| Ok(f64::from_bits(f.c[i].load(Ordering::Relaxed)))))
            }
            (Loc::Cell(i), _) => CE::B(Box::new(move |f, _| Ok(f.c[i].load(Ordering::Relaxed) != 0))),
        })
    }

    fn operand(&mut self, e: &Expr) -> Result<Operand, String> {
        match &e.kind {
            ExprKind::Int(v) => return Ok(Operand::I(Opnd::K(*v))),
            ExprKind::Float(v) => return Ok(Operand::F(Opnd::K(*v))),
            ExprKind::Var(n) => match self.lookup(n)? {
                (Loc::Local(i), Type::Int) => return Ok(Operand::I(Opnd::L(i))),
                (Loc::Local(i), Type::Float) => return Ok(Operand::F(Opnd::L(i))),
                _ => {}
            },
            _ => {}
        }
        Ok(match self.expr(e)? {
            CE::I(x) => Operand::I(Opnd::E(x)),
            CE::F(x) => Operand::F(Opnd::E(x)),
            other => Operand::Other(other),
        })
    }

    fn expr(&mut self, e: &Expr) -> Result<CE, String> {
        let pos = e.pos;
        Ok(match &e.kind {
            ExprKind::Int(v) => {
                let v = *v;
                CE::I(Box::new(move |_, _| Ok(v)))
            }
            ExprKind::Float(v) => {
                let v = *v;
                CE::F(Box::new(move |_, _| Ok(v)))
            }
            ExprKind::Bool(v) => {
                let v = *v;
                CE::B(Box::new(move |_, _| Ok(v)))
            }
            ExprKind::Var(n) => self.read_var(n)?,
            ExprKind::Index { name, index } => {
                let (loc, ty) = self.lookup(name)?;
                let (Loc::Arr(k), Type::Array(elem)) = (loc, ty) else {
                    return Err(format!("{pos}: `{name}` is not an array"));
                };
                let idx = self.int(index)?;
                let name = name.clone();
                match elem {
                    ElemType::Int => CE::I(Box::new(move |f, t| {
                        let i = idx(f, t)?;
                        let a = &f.a[k];
                        match a.load_bits(i) {
                            Some(b) => Ok(b as i64),
                            None => Err(out_of_bounds(pos, &name, i, a.len())),
                        }
                    })),
                    ElemType::Float => CE::F(Box::new(move |f, t| {
                        let i = idx(f, t)?;
                        let a = &f.a[k];
                        match a.load_bits(i) {
                            Some(b) => Ok(f64::from_bits(b)),
                            None => Err(out_of_bounds(pos, &name, i, a.len())),
                        }
                    })),
                }
            }
            ExprKind::Unary { op, operand } => match (op, self.expr(operand)?) {
                (UnaryOp::Neg, CE::I(x)) => un!(I, x, |a| a.checked_neg().ok_or(Trap::IntegerOverflow { pos })),
                (UnaryOp::Neg, CE::F(x)) => un!(F, x, |a| Ok(-a)),
                (UnaryOp::Not, CE::B(x)) => un!(B, x, |a| Ok(!a)),
                (_, other) => return Err(format!("{pos}: bad operand {}", other.ty_name())),
            },
            ExprKind::Binary { op, lhs, rhs } => {
                let l = self.operand(lhs)?;
                let r = self.operand(rhs)?;
                binary(*op, l, r, pos)?
            }
            ExprKind::Cast { to, operand } => match (to, self.expr(operand)?) {
                (Type::Int, CE::I(x)) => CE::I(x),
                (Type::Float, CE::F(x)) => CE::F(x),
                (Type::Float, CE::I(x)) => un!(F, x, |a| Ok(a as f64)),
                (Type::Int, CE::F(x)) => un!(I, x, |a| float_to_int(a, pos)),
                (_, other) => return Err(format!("{pos}: cannot convert {}", other.ty_name())),
            },
            ExprKind::Call { name, args } => self.call(name, args, pos)?,
        })
    }

    fn call(&mut self, name: &str, args: &[Expr], pos: Pos) -> Result<CE, String> {
        if let Some(&idx) = self.cx.functions.get(name) {
            let ret = self.cx.lowered.program.functions[idx].ret;
            let call = self.user_call(idx, args)?;
            return match ret {
                Some(ty) => Ok(CE::from_bits(ty, call)),
                None => Err(format!("{pos}: `{name}` does not return a value")),
            };
        }
        if self.cx.externs.contains_key(name) {
            let (ret, call) = self.extern_call(name, args, pos)?;
            return match ret {
                Some(ty) => Ok(CE::from_bits(ty, call)),
                None => Err(format!("{pos}: `{name}` does not return a value")),
            };
        }
        self.builtin(name, args, pos)
    }

    fn user_call(&mut self, idx: usize, args: &[Expr]) -> Result<Ev<u64>, String> {
        let args = args.iter().map(|a| self.arg(a)).collect::<Result<Vec<_>, _>>()?;
        Ok(Box::new(move |f, t| {
            let callee = &t.prog.functions[idx];
            let mut cf = Frame::new(&callee.layout, &t.prog.empty);
            for (a, &dst) in args.iter().zip(&callee.params) {
                match (a, dst) {
                    (Arg::Word(e), dst) => {
                        let v = e(f, t)?;
                        cf.set(dst, v);
                    }
                    (Arg::Arr(e), Loc::Arr(k)) => cf.a[k] = e(f, t)?,
                    (Arg::Arr(_), _) => unreachable!("array argument bound to a scalar parameter"),
                }
            }
            match (callee.body)(&mut cf, t)? {
                Flow::Return => Ok(cf.ret),
                Flow::Next if callee.returns => Err(Trap::MissingReturn {
                    function: callee.name.clone(),
                }),
                Flow::Next => Ok(0),
            }
        }))
    }

    fn extern_call(&mut self, name: &str, args: &[Expr], pos: Pos) -> Result<(Option<Type>, Ev<u64>), String> {
        let (decl, callback, symbol) = self.cx.externs[name].clone();
        let params: Vec<Type> = decl.params.iter().map(|p| p.ty).collect();
        let ret = decl.ret;
        let args = args.iter().map(|a| self.arg(a)).collect::<Result<Vec<_>, _>>()?;
        let call: Ev<u64> = Box::new(move |f, t| {
            let Some(cb) = &callback else {
                return Err(Trap::UnresolvedExtern {
                    pos,
                    symbol: symbol.clone(),
                });
            };
            let values = args
                .iter()
                .zip(&params)
                .map(|(a, &ty)| a.eval_value(ty, f, t))
                .collect::<R<Vec<_>>>()?;
            let failed = |message: String| Trap::ExternFailed {
                pos,
                symbol: symbol.clone(),
                message,
            };
            match (cb(&values).map_err(failed)?, ret) {
                (None, None) => Ok(0),
                (Some(v), Some(ty)) if v.ty() == ty && ty.is_scalar() => Ok(v.to_bits()),
                (got, _) => Err(failed(format!(
                    "returned {}, declared {}",
                    got.map_or("nothing".to_string(), |v| v.ty().to_string()),
                    ret.map_or("nothing".to_string(), |t| t.to_string())
                ))),
            }
        });
        Ok((ret, call))
    }

    fn builtin(&mut self, name: &str, args: &[Expr], pos: Pos) -> Result<CE, String> {
        if name == "len" {
            if let [Expr {
                kind: ExprKind::Var(v), ..
            }] = args
            {
                if let (Loc::Arr(k), _) = self.lookup(v)? {
                    return Ok(CE::I(Box::new(move |f, _| Ok(f.a[k].len() as i64))));
                }
            }
        }
        let mut compiled = args.iter().map(|a| self.expr(a)).collect::<Result<Vec<_>, _>>()?;
        let arity_error = |compiled: &[CE]| {
            let shown: Vec<&str> = compiled.iter().map(CE::ty_name).collect();
            format!("{pos}: no builtin `{name}` taking ({})", shown.join(", "))
        };
        let ce = match (name, compiled.len()) {
            ("now_seconds", 0) => CE::F(Box::new(|_, _| Ok(wall_seconds()))),
            ("tid", 0) => CE::I(Box::new(|_, t| Ok(t.tid as i64))),
            ("num_threads", 0) => CE::I(Box::new(|_, t| Ok(t.team.map_or(1, |tm| tm.size()) as i64))),
            (_, 1) => match (name, compiled.pop().expect("one argument")) {
                ("sqrt", CE::F(x)) => un!(F, x, |a| Ok(a.sqrt())),
                ("floor", CE::F(x)) => un!(F, x, |a| Ok(a.floor())),
                ("log", CE::F(x)) => un!(F, x, |a| Ok(a.ln())),
                ("abs", CE::F(x)) => un!(F, x, |a| Ok(a.abs())),
                ("abs", CE::I(x)) => un!(I, x, |a| a.checked_abs().ok_or(Trap::IntegerOverflow { pos })),
                ("split_seed", CE::I(x)) => un!(I, x, |a| Ok(split_seed(a))),
                ("rand_uniform", CE::I(x)) => un!(F, x, |a| Ok(rand_uniform(a))),
                ("len", CE::A(x)) => un!(I, x, |a| Ok(a.len() as i64)),
                (_, other) => return Err(arity_error(&[other])),
            },
            ("min" | "max", 2) => {
                let r = compiled.pop().expect("two arguments");
                let l = compiled.pop().expect("two arguments");
                match (name, l, r) {
                    ("min", CE::I(l), CE::I(r)) => bin!(I, l, r, |a, b| Ok(a.min(b))),
                    ("max", CE::I(l), CE::I(r)) => bin!(I, l, r, |a, b| Ok(a.max(b))),
                    ("min", CE::F(l), CE::F(r)) => bin!(F, l, r, |a, b| Ok(a.min(b))),
                    ("max", CE::F(l), CE::F(r)) => bin!(F, l, r, |a, b| Ok(a.max(b))),
                    (_, l, r) => return Err(arity_error(&[l, r])),
                }
            }
            _ => return Err(arity_error(&compiled)),
        };
        Ok(ce)
    }

    // -- statements ---------------------------------------------------------

    fn block(&mut self, b: &Block) -> Result<St, String> {
        self.scopes.push(HashMap::new());
        let stmts = b.stmts.iter().map(|s| self.stmt(s)).collect::<Result<Vec<_>, _>>();
        self.scopes.pop();
        Ok(seq(stmts?))
    }

    fn stmt(&mut self, s: &Stmt) -> Result<St, String> {
        let pos = s.pos;
        Ok(match &s.kind {
            StmtKind::Let { name, ty, len, init } => match ty {
                Type::Array(elem) => {
                    let elem = *elem;
                    let len = self.int(len.as_ref().ok_or_else(|| format!("{pos}: array without length"))?)?;
                    let Loc::Arr(k) = self.declare(name, *ty, false) else {
                        unreachable!("arrays get array slots")
                    };
                    Box::new(move |f, t| {
                        let n = len(f, t)?;
                        if !(0..=MAX_ARRAY_LEN).contains(&n) {
                            return Err(Trap::InvalidLength { pos, len: n });
                        }
                        f.a[k] = ArrayRef::zeroed(elem, n as usize);
                        Ok(Flow::Next)
                    })
                }
                _ => {
                    let init = init.as_ref().map(|e| self.bits(e)).transpose()?;
                    let loc = self.declare(name, *ty, false);
                    match init {
                        Some(e) => Box::new(move |f, t| {
                            let v = e(f, t)?;
                            f.set(loc, v);
                            Ok(Flow::Next)
                        }),
                        None => Box::new(move |f, _| {
                            f.set(loc, 0);
                            Ok(Flow::Next)
                        }),
                    }
                }
            },
            StmtKind::Assign { name, value } => {
                let (loc, _) = self.lookup(name)?;
                if matches!(loc, Loc::Arr(_)) {
                    return Err(format!("{pos}: array `{name}` cannot be reassigned"));
                }
                let v = self.bits(value)?;
                match loc {
                    Loc::Local(i) => Box::new(move |f, t| {
                        f.s[i] = v(f, t)?;
                        Ok(Flow::Next)
                    }),
                    _ => Box::new(move |f, t| {
                        let x = v(f, t)?;
                        f.set(loc, x);
                        Ok(Flow::Next)
                    }),
                }
            }
            StmtKind::IndexAssign { name, index, value } => {
                let (Loc::Arr(k), _) = self.lookup(name)? else {
                    return Err(format!("{pos}: `{name}` is not an array"));
                };
                let idx = self.int(index)?;
                let v = self.bits(value)?;
                let name = name.clone();
                Box::new(move |f, t| {
                    let i = idx(f, t)?;
                    let x = v(f, t)?;
                    let a = &f.a[k];
                    if a.try_store_bits(i, x) {
                        Ok(Flow::Next)
                    } else {
                        Err(out_of_bounds(pos, &name, i, a.len()))
                    }
                })
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                let c = self.boolean(cond)?;
                let th = self.block(then_block)?;
                match else_block {
                    Some(b) => {
                        let el = self.block(b)?;
                        Box::new(move |f, t| if c(f, t)? { th(f, t) } else { el(f, t) })
                    }
                    None => Box::new(move |f, t| if c(f, t)? { th(f, t) } else { Ok(Flow::Next) }),
                }
            }
            StmtKind::While { cond, body } => {
                let c = self.boolean(cond)?;
                let body = self.block(body)?;
                Box::new(move |f, t| {
                    while c(f, t)? {
                        if body(f, t)? == Flow::Return {
                            return Ok(Flow::Return);
                        }
                    }
                    Ok(Flow::Next)
                })
            }
            StmtKind::For {
                var,
                lower,
                upper,
                step,
                body,
            } => {
                let lo = self.int(lower)?;
                let hi = self.int(upper)?;
                let st = step.as_ref().map(|s| self.int(s)).transpose()?;
                self.scopes.push(HashMap::new());
                let v = self.declare(var, Type::Int, false);
                let body = self.block(body);
                self.scopes.pop();
                let body = body?;
                Box::new(move |f, t| {
                    let l = lo(f, t)?;
                    let h = hi(f, t)?;
                    let step = match &st {
                        Some(s) => s(f, t)?,
                        None => 1,
                    };
                    if step < 1 {
                        return Err(Trap::InvalidStep { pos, step });
                    }
                    let mut i = l;
                    while i < h {
                        f.set(v, i as u64);
                        if body(f, t)? == Flow::Return {
                            return Ok(Flow::Return);
                        }
                        match i.checked_add(step) {
                            Some(n) => i = n,
                            None => break,
                        }
                    }
                    Ok(Flow::Next)
                })
            }
            StmtKind::Block(b) => self.block(b)?,
            StmtKind::Call { name, args } => {
                let call: Ev<u64> = if let Some(&idx) = self.cx.functions.get(name.as_str()) {
                    self.user_call(idx, args)?
                } else if self.cx.externs.contains_key(name.as_str()) {
                    self.extern_call(name, args, pos)?.1
                } else {
                    self.builtin(name, args, pos)?.into_bits()?
                };
                Box::new(move |f, t| {
                    call(f, t)?;
                    Ok(Flow::Next)
                })
            }
            StmtKind::Return(value) => match value {
                Some(e) => {
                    let v = self.bits(e)?;
                    Box::new(move |f, t| {
                        f.ret = v(f, t)?;
                        Ok(Flow::Return)
                    })
                }
                None => Box::new(|_, _| Ok(Flow::Return)),
            },
            StmtKind::Print(args) => {
                let vals: Vec<Ev<Value>> = args
                    .iter()
                    .map(|a| self.expr(a).map(CE::into_value))
                    .collect::<Result<_, _>>()?;
                Box::new(move |f, t| {
                    let mut line = String::new();
                    for (i, v) in vals.iter().enumerate() {
                        if i > 0 {
                            line.push(' ');
                        }
                        use std::fmt::Write as _;
                        let _ = write!(line, "{}", v(f, t)?);
                    }
                    t.out.line(&line);
                    Ok(Flow::Next)
                })
            }
            StmtKind::Fork { region, .. } => self.fork(*region, pos)?,
        })
    }

    // -- regions ------------------------------------------------------------

    fn fork(&mut self, id: usize, pos: Pos) -> Result<St, String> {
        let region = self
            .cx
            .lowered
            .regions
            .get(id)
            .ok_or_else(|| format!("{pos}: fork of unknown region {id}"))?;
        let mut sources = Vec::with_capacity(region.captures.len());
        for c in &region.captures {
            let (loc, _) = self.lookup(&c.name)?;
            if c.mode == CaptureMode::SharedRef && c.ty.is_scalar() && !matches!(loc, Loc::Cell(_)) {
                return Err(format!("{pos}: shared variable `{}` has no shared cell", c.name));
            }
            sources.push(loc);
        }
        let bounds = match &region.loop_ {
            Some(lp) => Some(Bounds {
                lower: self.int(&lp.lower)?,
                upper: self.int(&lp.upper)?,
                step: self.int(&lp.step)?,
                pos,
            }),
            None => None,
        };
        Ok(match (region.kind, bounds) {
            (DirectiveKind::For, Some(b)) => worksharing_fork(id, sources, b),
            (DirectiveKind::For, None) => return Err(format!("{pos}: worksharing region without a loop")),
            (_, b) => team_fork(id, sources, b),
        })
    }
}

fn seq(mut stmts: Vec<St>) -> St {
    match stmts.len() {
        0 => Box::new(|_, _| Ok(Flow::Next)),
        1 => stmts.pop().expect("one statement"),
        _ => Box::new(move |f, t| {
            for s in &stmts {
                if s(f, t)? == Flow::Return {
                    return Ok(Flow::Return);
                }
            }
            Ok(Flow::Next)
        }),
    }
}

/// Scalar that lives in a frame word.
trait Word: Copy + Send + Sync + 'static {
    fn from_word(w: u64) -> Self;
}

impl Word for i64 {
    #[inline]
    fn from_word(w: u64) -> Self {
        w as i64
    }
}

impl Word for f64 {
    #[inline]
    fn from_word(w: u64) -> Self {
        f64::from_bits(w)
    }
}

/// Operand of a binary operator. Constants and plain locals are read
/// directly by the operator's closure instead of through a nested call.
enum Opnd<T> {
    K(T),
    L(usize),
    E(Ev<T>),
}

impl<T: Word> Opnd<T> {
    fn into_ev(self) -> Ev<T> {
        match self {
            Opnd::K(v) => Box::new(move |_, _| Ok(v)),
            Opnd::L(i) => Box::new(move |f, _| Ok(T::from_word(f.s[i]))),
            Opnd::E(e) => e,
        }
    }
}

enum Operand {
    I(Opnd<i64>),
    F(Opnd<f64>),
    Other(CE),
}

impl Operand {
    fn into_ce(self) -> CE {
        match self {
            Operand::I(o) => CE::I(o.into_ev()),
            Operand::F(o) => CE::F(o.into_ev()),
            Operand::Other(ce) => ce,
        }
    }
}

fn lift<A: Word, T: 'static, F>(l: Opnd<A>, r: Opnd<A>, op: F) -> Ev<T>
where
    F: Fn(A, A) -> R<T> + Copy + Send + Sync + 'static,
{
    use Opnd::*;
    match (l, r) {
        (K(a), K(b)) => Box::new(move |_, _| op(a, b)),
        (K(a), L(j)) => Box::new(move |f, _| op(a, A::from_word(f.s[j]))),
        (K(a), E(y)) => Box::new(move |f, t| op(a, y(f, t)?)),
        (L(i), K(b)) => Box::new(move |f, _| op(A::from_word(f.s[i]), b)),
        (L(i), L(j)) => Box::new(move |f, _| op(A::from_word(f.s[i]), A::from_word(f.s[j]))),
        (L(i), E(y)) => Box::new(move |f, t| {
            let b = y(f, t)?;
            op(A::from_word(f.s[i]), b)
        }),
        (E(x), K(b)) => Box::new(move |f, t| op(x(f, t)?, b)),
        (E(x), L(j)) => Box::new(move |f, t| {
            let a = x(f, t)?;
            op(a, A::from_word(f.s[j]))
        }),
        (E(x), E(y)) => Box::new(move |f, t| {
            let a = x(f, t)?;
            let b = y(f, t)?;
            op(a, b)
        }),
    }
}

fn binary(op: BinaryOp, l: Operand, r: Operand, pos: Pos) -> Result<CE, String> {
    use BinaryOp::*;
    let overflow = move || Trap::IntegerOverflow { pos };
    let divide_by_zero = move || Trap::DivisionByZero { pos };
    Ok(match (l, r) {
        (Operand::I(l), Operand::I(r)) => match op {
            Add => CE::I(lift(l, r, move |a: i64, b| a.checked_add(b).ok_or_else(overflow))),
            Sub => CE::I(lift(l, r, move |a: i64, b| a.checked_sub(b).ok_or_else(overflow))),
            Mul => CE::I(lift(l, r, move |a: i64, b| a.checked_mul(b).ok_or_else(overflow))),
            Div => CE::I(lift(l, r, move |a: i64, b| {
                if b == 0 {
                    Err(divide_by_zero())
                } else {
                    a.checked_div(b).ok_or_else(overflow)
                }
            })),
            Rem => CE::I(lift(l, r, move |a: i64, b| {
                if b == 0 {
                    Err(divide_by_zero())
                } else {
                    a.checked_rem(b).ok_or_else(overflow)
                }
            })),
            Eq => CE::B(lift(l, r, |a: i64, b| Ok(a == b))),
            Ne => CE::B(lift(l, r, |a: i64, b| Ok(a != b))),
            Lt => CE::B(lift(l, r, |a: i64, b| Ok(a < b))),
            Le => CE::B(lift(l, r, |a: i64, b| Ok(a <= b))),
            Gt => CE::B(lift(l, r, |a: i64, b| Ok(a > b))),
            Ge => CE::B(lift(l, r, |a: i64, b| Ok(a >= b))),
            And | Or => return Err(format!("{pos}: logical operator on int")),
        },
        (Operand::F(l), Operand::F(r)) => match op {
            Add => CE::F(lift(l, r, |a: f64, b| Ok(a + b))),
            Sub => CE::F(lift(l, r, |a: f64, b| Ok(a - b))),
            Mul => CE::F(lift(l, r, |a: f64, b| Ok(a * b))),
            Div => CE::F(lift(l, r, |a: f64, b| Ok(a / b))),
            Eq => CE::B(lift(l, r, |a: f64, b| Ok(a == b))),
            Ne => CE::B(lift(l, r, |a: f64, b| Ok(a != b))),
            Lt => CE::B(lift(l, r, |a: f64, b| Ok(a < b))),
            Le => CE::B(lift(l, r, |a: f64, b| Ok(a <= b))),
            Gt => CE::B(lift(l, r, |a: f64, b| Ok(a > b))),
            Ge => CE::B(lift(l, r, |a: f64, b| Ok(a >= b))),
            Rem | And | Or => return Err(format!("{pos}: operator `{}` on float", op.symbol())),
        },
        (l, r) => match (l.into_ce(), r.into_ce()) {
            (CE::B(l), CE::B(r)) => match op {
                And => CE::B(Box::new(move |f, t| Ok(l(f, t)? && r(f, t)?))),
                Or => CE::B(Box::new(move |f, t| Ok(l(f, t)? || r(f, t)?))),
                Eq => bin!(B, l, r, |a, b| Ok(a == b)),
                Ne => bin!(B, l, r, |a, b| Ok(a != b)),
                _ => return Err(format!("{pos}: operator `{}` on bool", op.symbol())),
            },
            (l, r) => {
                return Err(format!(
                    "{pos}: mismatched operands {} {} {}",
                    l.ty_name(),
                    op.symbol(),
                    r.ty_name()
                ))
            }
        },
    })
}

// ---------------------------------------------------------------------------
// Fork execution

struct Bounds {
    lower: Ev<i64>,
    upper: Ev<i64>,
    step: Ev<i64>,
    pos: Pos,
}

impl Bounds {
    fn eval(&self, f: &mut Frame, t: &Thread<'_>) -> R<(i64, i64, i64)> {
        let l = (self.lower)(f, t)?;
        let u = (self.upper)(f, t)?;
        let s = (self.step)(f, t)?;
        if s < 1 {
            return Err(Trap::InvalidStep { pos: self.pos, step: s });
        }
        Ok((l, u, s))
    }
}

/// A captured variable's value at region entry.
enum Entry {
    Cell(Arc<AtomicU64>),
    Word(u64),
    Array(ArrayRef),
    Empty,
}

fn capture_entries(f: &Frame, sources: &[Loc], caps: &[CapSlot]) -> Vec<Entry> {
    caps.iter()
        .zip(sources)
        .map(|(c, &src)| match (c.mode, src) {
            (_, Loc::Arr(k)) => Entry::Array(f.a[k].clone()),
            (CaptureMode::SharedRef, Loc::Cell(i)) => Entry::Cell(f.c[i].clone()),
            (CaptureMode::PrivateZero, _) => Entry::Empty,
            (_, loc) => Entry::Word(f.get(loc)),
        })
        .collect()
}

/// Initializes a member's region frame from the entry values.
fn materialize(mf: &mut Frame, caps: &[CapSlot], entries: &[Entry]) {
    for (c, e) in caps.iter().zip(entries) {
        match (c.mode, e, c.dst) {
            (CaptureMode::SharedRef, Entry::Cell(cell), Loc::Cell(j)) => mf.c[j] = cell.clone(),
            (CaptureMode::SharedRef, Entry::Array(a), Loc::Arr(k)) => mf.a[k] = a.clone(),
            (CaptureMode::PrivateZero, Entry::Array(a), Loc::Arr(k)) => mf.a[k] = ArrayRef::zeroed(a.elem(), a.len()),
            (CaptureMode::FirstprivateCopy, Entry::Array(a), Loc::Arr(k)) => mf.a[k] = a.deep_copy(),
            (CaptureMode::FirstprivateCopy, Entry::Word(w), dst) => mf.set(dst, *w),
            (CaptureMode::ReductionSlot(op), _, dst) => {
                let kind = kind_of(c.ty).expect("reduction captures are numeric scalars");
                mf.set(dst, bits_of(reduction_identity(op, kind)));
            }
            // Private scalars start at zero in a fresh frame.
            (CaptureMode::PrivateZero, _, _) => {}
            _ => unreachable!("capture entry does not match its slot"),
        }
    }
}

fn reduce_trap(e: crate::runtime::ReduceError, pos: Pos) -> Trap {
    match e {
        crate::runtime::ReduceError::Overflow(_) => Trap::IntegerOverflow { pos },
        other => Trap::Internal(other.to_string()),
    }
}

/// Runs the iterations of a worksharing loop assigned to `tid`.
#[allow(clippy::too_many_arguments)]
fn run_loop(
    reg: &RegionUnit,
    mf: &mut Frame,
    t: &Thread<'_>,
    (lower, upper, step): (i64, i64, i64),
    dispatch: Option<&LoopDispatch>,
    tid: usize,
    size: usize,
    team: &TeamContext,
) -> R<()> {
    let var = reg.var.expect("worksharing regions have an induction slot");
    let body = &reg.body;
    let run = |c: IterationChunk, mf: &mut Frame| -> R<()> {
        let mut i = c.lower;
        while i < c.upper {
            mf.set(var, i as u64);
            body(mf, t)?;
            match i.checked_add(c.step) {
                Some(n) => i = n,
                None => break,
            }
        }
        Ok(())
    };
    let cancelled = || {
        if team.is_cancelled() {
            Err(Trap::Cancelled)
        } else {
            Ok(())
        }
    };
    match (reg.schedule, dispatch) {
        (ScheduleKind::Dynamic, Some(d)) => {
            let chunk = reg.chunk.unwrap_or(1);
            while let Some(c) = d.dynamic_next(chunk) {
                cancelled()?;
                run(c, mf)?;
            }
        }
        (ScheduleKind::Guided, Some(d)) => {
            let min = reg.chunk.unwrap_or(1);
            while let Some(c) = d.guided_next(size, min) {
                cancelled()?;
                run(c, mf)?;
            }
        }
        _ => {
            let chunks =
                static_chunks(lower, upper, step, reg.chunk, tid, size).map_err(|e| Trap::Internal(e.to_string()))?;
            for c in chunks {
                cancelled()?;
                run(c, mf)?;
            }
        }
    }
    Ok(())
}

fn make_dispatch(schedule: ScheduleKind, (l, u, s): (i64, i64, i64)) -> Option<LoopDispatch> {
    match schedule {
        ScheduleKind::Static => None,
        ScheduleKind::Dynamic | ScheduleKind::Guided => LoopDispatch::new(l, u, s).ok(),
    }
}

/// Fork of a `parallel` or `parallel for` region: starts a team, joins it,
/// then writes reductions back into the forking frame.
fn team_fork(id: usize, sources: Vec<Loc>, bounds: Option<Bounds>) -> St {
    Box::new(move |f, t| {
        let reg = &t.prog.regions[id];
        let range = bounds.as_ref().map(|b| b.eval(f, t)).transpose()?;
        let pos = bounds.as_ref().map_or(Pos::new(0, 0), |b| b.pos);
        let entries = capture_entries(f, &sources, &reg.captures);
        let outermost = !in_team();
        let size = t.rt.plan_fork(reg.num_threads);
        let dispatch = range.and_then(|r| make_dispatch(reg.schedule, r));
        let table = reg.table(size);
        let start = Instant::now();
        let (prog, rt, out) = (t.prog, t.rt, t.out);
        let result = run_team::<Trap, _>(size, |m| {
            let mt = Thread {
                prog,
                rt,
                out,
                tid: m.tid,
                team: Some(m.team),
                seq: Cell::new(0),
            };
            let mut mf = Frame::new(&reg.layout, &t.prog.empty);
            materialize(&mut mf, &reg.captures, &entries);
            match range {
                None => {
                    (reg.body)(&mut mf, &mt)?;
                }
                Some(r) => run_loop(reg, &mut mf, &mt, r, dispatch.as_ref(), m.tid, size, m.team)?,
            }
            if !reg.reductions.is_empty() {
                table.submit(m.tid, reg.partials(&mf));
            }
            Ok(())
        });
        if outermost {
            t.rt.record_region(start.elapsed());
        }
        result?;
        for (slot, &(ci, _, kind)) in reg.reductions.iter().enumerate() {
            let Entry::Word(orig) = entries[ci] else {
                unreachable!("reduction entries hold the original value")
            };
            let v = table
                .fold_onto(slot, scalar_of(kind, orig))
                .map_err(|e| reduce_trap(e, pos))?;
            f.set(sources[ci], bits_of(v));
        }
        Ok(Flow::Next)
    })
}

/// Shared state of one worksharing loop within a team.
struct LoopShared {
    range: R<(i64, i64, i64)>,
    dispatch: Option<LoopDispatch>,
    table: ReductionTable,
    /// Member that created this state and its reduction target cells.
    first: usize,
    cells: Vec<Option<Arc<AtomicU64>>>,
}

/// Fork of a `for` region inside a team: each member runs its share of the
/// iterations, reductions are combined, and members meet at a barrier.
fn worksharing_fork(id: usize, sources: Vec<Loc>, bounds: Bounds) -> St {
    Box::new(move |f, t| {
        let reg = &t.prog.regions[id];
        let solo;
        let (team, tid) = match t.team {
            Some(tm) => (tm, t.tid),
            None => {
                solo = TeamContext::new(1);
                (&solo, 0)
            }
        };
        let seq = t.seq.get();
        t.seq.set(seq + 1);
        let shared: Arc<LoopShared> = team.workshare(seq, || {
            let range = bounds.eval(f, t);
            let dispatch = range.as_ref().ok().and_then(|&r| make_dispatch(reg.schedule, r));
            let cells = reg
                .reductions
                .iter()
                .map(|&(ci, _, _)| match sources[ci] {
                    Loc::Cell(i) => Some(f.c[i].clone()),
                    _ => None,
                })
                .collect();
            LoopShared {
                range,
                dispatch,
                table: reg.table(team.size()),
                first: tid,
                cells,
            }
        });
        let range = shared.range.clone()?;
        let entries = capture_entries(f, &sources, &reg.captures);
        let mut mf = Frame::new(&reg.layout, &t.prog.empty);
        materialize(&mut mf, &reg.captures, &entries);
        run_loop(reg, &mut mf, t, range, shared.dispatch.as_ref(), tid, team.size(), team)?;
        if !reg.reductions.is_empty() {
            shared.table.submit(tid, reg.partials(&mf));
            team.barrier()?;
            for (slot, &(ci, _, kind)) in reg.reductions.iter().enumerate() {
                let src = sources[ci];
                // A target cell shared with the first arrival is written once,
                // by that member; member-local targets are written by each.
                let writer = match (src, &shared.cells[slot]) {
                    (Loc::Cell(i), Some(cell)) if Arc::ptr_eq(cell, &f.c[i]) => tid == shared.first,
                    _ => true,
                };
                if writer {
                    let v = shared
                        .table
                        .fold_onto(slot, scalar_of(kind, f.get(src)))
                        .map_err(|e| reduce_trap(e, bounds.pos))?;
                    f.set(src, bits_of(v));
                }
            }
        }
        team.barrier()?;
        Ok(Flow::Next)
    })
}

// ---------------------------------------------------------------------------
// Program compilation

/// Compiles every function and region of `lowered`. Extern symbols are
/// resolved against `externs` now; unresolved ones trap when called.
pub(crate) fn compile(lowered: &LoweredProgram, externs: &ExternRegistry) -> Result<Compiled, String> {
    let program = &lowered.program;
    let cx = Ctx {
        lowered,
        functions: program
            .functions
            .iter()
            .enumerate()
            .map(|(i, f)| (f.name.as_str(), i))
            .collect(),
        externs: program
            .externs
            .iter()
            .map(|e| {
                let symbol = bind_extern(&e.name, e.abi);
                let cb = externs.lookup(&symbol).cloned();
                (e.name.as_str(), (e, cb, symbol))
            })
            .collect(),
    };

    let mut functions = Vec::with_capacity(program.functions.len());
    for decl in &program.functions {
        let mut u = Unit::new(&cx, &decl.body);
        let params = decl.params.iter().map(|p| u.declare(&p.name, p.ty, false)).collect();
        let body = u.block(&decl.body)?;
        functions.push(FnUnit {
            name: decl.name.clone(),
            layout: u.layout,
            params,
            body,
            returns: decl.ret.is_some(),
        });
    }

    let mut regions = Vec::with_capacity(lowered.regions.len());
    for r in &lowered.regions {
        let mut u = Unit::new(&cx, &r.body);
        let captures: Vec<CapSlot> = r
            .captures
            .iter()
            .map(|c| CapSlot {
                dst: u.declare(&c.name, c.ty, c.mode == CaptureMode::SharedRef),
                mode: c.mode,
                ty: c.ty,
            })
            .collect();
        let mut reductions = Vec::new();
        for (ci, c) in captures.iter().enumerate() {
            if let CaptureMode::ReductionSlot(op) = c.mode {
                let kind =
                    kind_of(c.ty).ok_or_else(|| format!("reduction on non-numeric `{}`", r.captures[ci].name))?;
                reductions.push((ci, op, kind));
            }
        }
        u.scopes.push(HashMap::new());
        let var = r.loop_.as_ref().map(|lp| u.declare(&lp.var, Type::Int, false));
        let body = u.block(&r.body)?;
        regions.push(RegionUnit {
            layout: u.layout,
            body,
            captures,
            reductions,
            var,
            schedule: r.loop_.as_ref().map_or(ScheduleKind::Static, |l| l.schedule),
            chunk: r.loop_.as_ref().and_then(|l| l.chunk),
            num_threads: r.num_threads,
        });
    }

    let main = *cx.functions.get("main").ok_or("program has no `main` function")?;
    Ok(Compiled {
        functions,
        regions,
        main,
        empty: ArrayRef::zeroed(ElemType::Int, 0),
    })
}
