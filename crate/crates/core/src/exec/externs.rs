//! Host callbacks bound to `extern` declarations.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::value::Value;
use crate::frontend::ast::Abi;

/// Host implementation of an extern procedure. Callbacks may be invoked by
/// several team members at once and must be safe for concurrent use.
pub type ExternFn = Arc<dyn Fn(&[Value]) -> Result<Option<Value>, String> + Send + Sync>;

/// Symbol an extern declaration resolves to: Fortran-ABI names gain a
/// trailing underscore, native names are unchanged.
pub fn bind_extern(name: &str, abi: Abi) -> String {
    match abi {
        Abi::Fortran => format!("{name}_"),
        Abi::Native => name.to_string(),
    }
}

/// Callback table keyed by resolved symbol.
#[derive(Clone, Default)]
pub struct ExternRegistry {
    symbols: HashMap<String, ExternFn>,
}

impl fmt::Debug for ExternRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<&String> = self.symbols.keys().collect();
        names.sort();
        f.debug_struct("ExternRegistry").field("symbols", &names).finish()
    }
}

impl ExternRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry with the demo symbols `dcopy_` and `wtime_`.
    pub fn with_demo() -> Self {
        let mut r = Self::empty();
        r.register("dcopy_", Arc::new(dcopy));
        r.register("wtime_", Arc::new(|_: &[Value]| Ok(Some(Value::Float(wall_seconds())))));
        r
    }

    /// Registers `callback` under an already-resolved symbol. The callback
    /// must be safe to call from several threads at once.
    pub fn register(&mut self, symbol: impl Into<String>, callback: ExternFn) {
        self.symbols.insert(symbol.into(), callback);
    }

    pub fn lookup(&self, symbol: &str) -> Option<&ExternFn> {
        self.symbols.get(symbol)
    }
}

pub(crate) fn wall_seconds() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// `dcopy(n, x, y)`: copies `x[0..n]` into `y[0..n]`.
fn dcopy(args: &[Value]) -> Result<Option<Value>, String> {
    let [Value::Int(n), Value::Array(x), Value::Array(y)] = args else {
        return Err("dcopy expects (int, array, array)".into());
    };
    let n = usize::try_from(*n).map_err(|_| format!("dcopy: negative count {n}"))?;
    if n > x.len() || n > y.len() {
        return Err(format!("dcopy: count {n} exceeds array length"));
    }
    if x.elem() != y.elem() {
        return Err("dcopy: arrays of different element types".into());
    }
    for i in 0..n {
        let v = x.get(i).expect("index checked against length");
        y.set(i, v);
    }
    Ok(None)
}
