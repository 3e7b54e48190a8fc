//! Runtime errors raised while executing a program.

use thiserror::Error;

use crate::frontend::ast::Pos;
use crate::runtime::{Cancelled, MemberError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Trap {
    #[error("index {index} out of bounds for `{name}` of length {len}")]
    IndexOutOfBounds {
        pos: Pos,
        name: String,
        index: i64,
        len: usize,
    },
    #[error("integer division by zero")]
    DivisionByZero { pos: Pos },
    #[error("integer overflow")]
    IntegerOverflow { pos: Pos },
    #[error("cannot convert {value:?} to int")]
    InvalidConversion { pos: Pos, value: f64 },
    #[error("invalid array length {len}")]
    InvalidLength { pos: Pos, len: i64 },
    #[error("loop step {step} is less than 1")]
    InvalidStep { pos: Pos, step: i64 },
    #[error("unresolved extern symbol `{symbol}`")]
    UnresolvedExtern { pos: Pos, symbol: String },
    #[error("extern `{symbol}` failed: {message}")]
    ExternFailed { pos: Pos, symbol: String, message: String },
    #[error("function `{function}` ended without returning a value")]
    MissingReturn { function: String },
    #[error("program cannot be executed: {0}")]
    Internal(String),
    #[error("team cancelled after a member failed")]
    Cancelled,
}

impl Trap {
    /// Source position of the failing construct, when known.
    pub fn pos(&self) -> Option<Pos> {
        match self {
            Trap::IndexOutOfBounds { pos, .. }
            | Trap::DivisionByZero { pos }
            | Trap::IntegerOverflow { pos }
            | Trap::InvalidConversion { pos, .. }
            | Trap::InvalidLength { pos, .. }
            | Trap::InvalidStep { pos, .. }
            | Trap::UnresolvedExtern { pos, .. }
            | Trap::ExternFailed { pos, .. } => Some(*pos),
            Trap::MissingReturn { .. } | Trap::Internal(_) | Trap::Cancelled => None,
        }
    }
}

impl From<Cancelled> for Trap {
    fn from(_: Cancelled) -> Self {
        Trap::Cancelled
    }
}

impl MemberError for Trap {
    fn is_cancellation(&self) -> bool {
        matches!(self, Trap::Cancelled)
    }
}
