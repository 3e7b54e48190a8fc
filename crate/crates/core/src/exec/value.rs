//! Runtime values and shared array storage.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::frontend::ast::{ElemType, Type};

/// Largest number of elements a single array may hold.
pub const MAX_ARRAY_LEN: i64 = 1 << 28;

/// Fixed-length array whose elements are stored as 64-bit words. Element
/// access is word-atomic but unordered, so racing accesses from team members
/// never tear a value.
pub struct ArrayData {
    elem: ElemType,
    words: Box<[AtomicU64]>,
}

/// Shared handle to an array; clones alias the same storage.
#[derive(Clone)]
pub struct ArrayRef(Arc<ArrayData>);

impl ArrayRef {
    pub fn zeroed(elem: ElemType, len: usize) -> Self {
        // 0 is the bit pattern of both 0i64 and 0.0f64.
        let words = (0..len).map(|_| AtomicU64::new(0)).collect();
        Self(Arc::new(ArrayData { elem, words }))
    }

    pub fn from_ints(values: &[i64]) -> Self {
        let a = Self::zeroed(ElemType::Int, values.len());
        for (i, v) in values.iter().enumerate() {
            a.store_bits(i, *v as u64);
        }
        a
    }

    pub fn from_floats(values: &[f64]) -> Self {
        let a = Self::zeroed(ElemType::Float, values.len());
        for (i, v) in values.iter().enumerate() {
            a.store_bits(i, v.to_bits());
        }
        a
    }

    pub fn elem(&self) -> ElemType {
        self.0.elem
    }

    pub fn len(&self) -> usize {
        self.0.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.words.is_empty()
    }

    /// Raw word at `i`, or `None` when out of bounds.
    #[inline]
    pub fn load_bits(&self, i: i64) -> Option<u64> {
        usize::try_from(i)
            .ok()
            .and_then(|i| self.0.words.get(i))
            .map(|w| w.load(Ordering::Relaxed))
    }

    /// Stores a raw word at `i`; returns false when out of bounds.
    #[inline]
    pub fn try_store_bits(&self, i: i64, bits: u64) -> bool {
        match usize::try_from(i).ok().and_then(|i| self.0.words.get(i)) {
            Some(w) => {
                w.store(bits, Ordering::Relaxed);
                true
            }
            None => false,
        }
    }

    fn store_bits(&self, i: usize, bits: u64) {
        self.0.words[i].store(bits, Ordering::Relaxed);
    }

    pub fn get(&self, i: usize) -> Option<Value> {
        let bits = self.load_bits(i as i64)?;
        Some(match self.elem() {
            ElemType::Int => Value::Int(bits as i64),
            ElemType::Float => Value::Float(f64::from_bits(bits)),
        })
    }

    /// Stores a scalar of the array's element type. Returns false on an
    /// out-of-bounds index or a type mismatch.
    pub fn set(&self, i: usize, v: Value) -> bool {
        let bits = match (self.elem(), v) {
            (ElemType::Int, Value::Int(x)) => x as u64,
            (ElemType::Float, Value::Float(x)) => x.to_bits(),
            _ => return false,
        };
        self.try_store_bits(i as i64, bits)
    }

    pub fn to_ints(&self) -> Vec<i64> {
        self.0.words.iter().map(|w| w.load(Ordering::Relaxed) as i64).collect()
    }

    pub fn to_floats(&self) -> Vec<f64> {
        self.0
            .words
            .iter()
            .map(|w| f64::from_bits(w.load(Ordering::Relaxed)))
            .collect()
    }

    /// Independent copy of the current contents.
    pub fn deep_copy(&self) -> Self {
        let words = self
            .0
            .words
            .iter()
            .map(|w| AtomicU64::new(w.load(Ordering::Relaxed)))
            .collect();
        Self(Arc::new(ArrayData {
            elem: self.elem(),
            words,
        }))
    }

    pub fn same_storage(&self, other: &ArrayRef) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl fmt::Debug for ArrayRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}; {}]", Type::Array(self.elem()), self.len())
    }
}

#[derive(Debug, Clone)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Array(ArrayRef),
}

impl Value {
    pub fn ty(&self) -> Type {
        match self {
            Value::Int(_) => Type::Int,
            Value::Float(_) => Type::Float,
            Value::Bool(_) => Type::Bool,
            Value::Array(a) => Type::Array(a.elem()),
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            Value::Float(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&ArrayRef> {
        match self {
            Value::Array(a) => Some(a),
            _ => None,
        }
    }

    /// Scalar from its word encoding.
    pub(crate) fn from_bits(ty: Type, bits: u64) -> Value {
        match ty {
            Type::Int => Value::Int(bits as i64),
            Type::Float => Value::Float(f64::from_bits(bits)),
            Type::Bool => Value::Bool(bits != 0),
            Type::Array(_) => unreachable!("arrays have no word encoding"),
        }
    }

    pub(crate) fn to_bits(&self) -> u64 {
        match self {
            Value::Int(v) => *v as u64,
            Value::Float(v) => v.to_bits(),
            Value::Bool(b) => u64::from(*b),
            Value::Array(_) => unreachable!("arrays have no word encoding"),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits(),
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Array(a), Value::Array(b)) => a.same_storage(b),
            _ => false,
        }
    }
}

/// Text of a scalar as `print` writes it.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v:?}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Array(a) => write!(f, "{a:?}"),
        }
    }
}
