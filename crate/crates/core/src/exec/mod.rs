//! Execution of lowered programs on the worksharing runtime.

mod engine;
pub mod externs;
pub mod trap;
pub mod value;

use std::fmt;

use crate::runtime::Runtime;
use crate::transform::LoweredProgram;

pub use engine::{rand_uniform, split_seed};
pub use externs::{bind_extern, ExternFn, ExternRegistry};
pub use trap::Trap;
pub use value::{ArrayRef, Value, MAX_ARRAY_LEN};

/// Execution settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Command-line team size override.
    pub threads: Option<usize>,
    /// Raw value of the thread-count environment variable.
    pub env_threads: Option<String>,
    /// Hardware parallelism used when nothing else sets the team size.
    pub hardware: usize,
    pub externs: ExternRegistry,
    /// Write `print` output to stdout as it happens instead of collecting it.
    pub echo: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            threads: None,
            env_threads: std::env::var(crate::runtime::THREADS_ENV).ok(),
            hardware: crate::runtime::hardware_threads(),
            externs: ExternRegistry::with_demo(),
            echo: false,
        }
    }
}

impl RunConfig {
    /// Configuration with a fixed team size and no environment influence.
    pub fn with_threads(threads: usize) -> Self {
        Self {
            threads: Some(threads),
            env_threads: None,
            ..Self::default()
        }
    }
}

/// Result of a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramOutput {
    /// Collected `print` output; empty when echoing.
    pub printed: String,
    /// Value returned by `main`, or 0.
    pub exit_status: i64,
    /// Runtime warnings, without the warning prefix.
    pub warnings: Vec<String>,
    /// Wall-clock seconds spent inside outermost parallel regions.
    pub region_seconds: f64,
}

/// A run that ended in a trap, with whatever was produced before it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecError {
    pub trap: Trap,
    pub output: ProgramOutput,
}

impl fmt::Display for ExecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.trap.pos() {
            Some(p) => write!(f, "{p}: runtime error: {}", self.trap),
            None => write!(f, "runtime error: {}", self.trap),
        }
    }
}

impl std::error::Error for ExecError {}

/// Executes `main` of a lowered program.
pub fn run_lowered(lowered: &LoweredProgram, config: &RunConfig) -> Result<ProgramOutput, ExecError> {
    let rt = Runtime::with_sources(config.threads, config.env_threads.clone(), config.hardware);
    let out = engine::Output::new(config.echo);
    let result = engine::compile(lowered, &config.externs)
        .map_err(Trap::Internal)
        .and_then(|prog| prog.run_main(&rt, &out));
    let output = |exit_status| ProgramOutput {
        printed: out.take(),
        exit_status,
        warnings: rt.warnings(),
        region_seconds: rt.region_seconds(),
    };
    match result {
        Ok(status) => Ok(output(status)),
        Err(trap) => Err(ExecError {
            trap,
            output: output(1),
        }),
    }
}
