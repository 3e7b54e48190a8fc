//! Reduction identities and deterministic combination.

use std::fmt;
use std::sync::Mutex;

use thiserror::Error;

pub use crate::directives::ReduceOp;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    Int(i64),
    Float(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarKind {
    Int,
    Float,
}

impl Scalar {
    pub fn kind(self) -> ScalarKind {
        match self {
            Scalar::Int(_) => ScalarKind::Int,
            Scalar::Float(_) => ScalarKind::Float,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(v) => write!(f, "{v}"),
            Scalar::Float(v) => write!(f, "{v:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReduceError {
    #[error("integer overflow while combining a `{0}` reduction")]
    Overflow(ReduceOp),
    #[error("reduction partials of mixed types")]
    MixedTypes,
}

pub fn reduction_identity(op: ReduceOp, kind: ScalarKind) -> Scalar {
    match (op, kind) {
        (ReduceOp::Add, ScalarKind::Int) => Scalar::Int(0),
        (ReduceOp::Add, ScalarKind::Float) => Scalar::Float(0.0),
        (ReduceOp::Mul, ScalarKind::Int) => Scalar::Int(1),
        (ReduceOp::Mul, ScalarKind::Float) => Scalar::Float(1.0),
        (ReduceOp::Min, ScalarKind::Int) => Scalar::Int(i64::MAX),
        (ReduceOp::Min, ScalarKind::Float) => Scalar::Float(f64::INFINITY),
        (ReduceOp::Max, ScalarKind::Int) => Scalar::Int(i64::MIN),
        (ReduceOp::Max, ScalarKind::Float) => Scalar::Float(f64::NEG_INFINITY),
    }
}

/// `a op b`. Integer add/mul are checked. Float min/max ignore NaN operands,
/// matching the `min`/`max` builtins.
pub fn apply(op: ReduceOp, a: Scalar, b: Scalar) -> Result<Scalar, ReduceError> {
    match (a, b) {
        (Scalar::Int(x), Scalar::Int(y)) => {
            let v = match op {
                ReduceOp::Add => x.checked_add(y),
                ReduceOp::Mul => x.checked_mul(y),
                ReduceOp::Min => Some(x.min(y)),
                ReduceOp::Max => Some(x.max(y)),
            };
            v.map(Scalar::Int).ok_or(ReduceError::Overflow(op))
        }
        (Scalar::Float(x), Scalar::Float(y)) => Ok(Scalar::Float(match op {
            ReduceOp::Add => x + y,
            ReduceOp::Mul => x * y,
            ReduceOp::Min => x.min(y),
            ReduceOp::Max => x.max(y),
        })),
        _ => Err(ReduceError::MixedTypes),
    }
}

/// Left fold of `op` over `partials` in the given (tid) order. The fixed
/// association makes float results bit-reproducible for a fixed team size.
///
/// Returns `None` for an empty list.
pub fn combine(op: ReduceOp, partials: &[Scalar]) -> Result<Option<Scalar>, ReduceError> {
    let mut iter = partials.iter().copied();
    let Some(first) = iter.next() else {
        return Ok(None);
    };
    iter.try_fold(first, |acc, p| apply(op, acc, p)).map(Some)
}

/// Per-member partials for the reduction slots of one region or loop.
#[derive(Debug)]
pub struct ReductionTable {
    slots: Vec<(ReduceOp, ScalarKind)>,
    partials: Mutex<Vec<Option<Vec<Scalar>>>>,
}

impl ReductionTable {
    pub fn new(team: usize, slots: Vec<(ReduceOp, ScalarKind)>) -> Self {
        Self {
            slots,
            partials: Mutex::new(vec![None; team]),
        }
    }

    /// Identity-initialized partials for one member.
    pub fn identities(&self) -> Vec<Scalar> {
        self.slots.iter().map(|&(op, k)| reduction_identity(op, k)).collect()
    }

    pub fn submit(&self, tid: usize, values: Vec<Scalar>) {
        let mut p = self.partials.lock().unwrap_or_else(|e| e.into_inner());
        p[tid] = Some(values);
    }

    /// Folds the submitted partials of `slot` onto `initial` in ascending
    /// tid order: `((initial op p0) op p1) ...`.
    pub fn fold_onto(&self, slot: usize, initial: Scalar) -> Result<Scalar, ReduceError> {
        let p = self.partials.lock().unwrap_or_else(|e| e.into_inner());
        let op = self.slots[slot].0;
        p.iter()
            .flatten()
            .try_fold(initial, |acc, member| apply(op, acc, member[slot]))
    }

    /// Combines submitted partials slot by slot in ascending tid order.
    /// Members that never submitted contribute the identity.
    pub fn finish(&self) -> Result<Vec<Scalar>, ReduceError> {
        let p = self.partials.lock().unwrap_or_else(|e| e.into_inner());
        let ids = self.identities();
        (0..self.slots.len())
            .map(|s| {
                let column: Vec<Scalar> = p.iter().map(|m| m.as_ref().map_or(ids[s], |v| v[s])).collect();
                combine(self.slots[s].0, &column).map(|v| v.unwrap_or(ids[s]))
            })
            .collect()
    }
}
