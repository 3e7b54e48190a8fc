//! Compiler and runtime for MK programs annotated with `//#omp` directives.
//!
//! The pipeline is [`frontend`] (lex, parse), [`sema`] (type checking),
//! [`transform`] (directive validation and region outlining) and [`exec`]
//! (execution on the fork/join [`runtime`]).

pub mod diag;
pub mod directives;
pub mod exec;
pub mod frontend;
pub mod runtime;
pub mod sema;
pub mod transform;

pub use diag::{CompileError, Diagnostic, Diagnostics};
pub use directives::{Directive, DirectiveKind, ReduceOp, ScheduleKind};
pub use exec::{run_lowered, ExecError, ExternRegistry, ProgramOutput, RunConfig, Trap, Value};
pub use frontend::ast::{Pos, Program};
pub use frontend::{parse_source, print_program};
pub use transform::{dump_regions, lower_program, LoweredProgram, OutlinedRegion};

/// Parses, type-checks and lowers `source`.
pub fn compile_source(source: &str) -> Result<LoweredProgram, Diagnostics> {
    let program = parse_source(source)?;
    sema::check_program(&program)?;
    lower_program(&program)
}

/// Compiles and runs `source` with `config`.
pub fn run_source(source: &str, config: &RunConfig) -> Result<ProgramOutput, RunError> {
    let lowered = compile_source(source).map_err(RunError::Compile)?;
    run_lowered(&lowered, config).map_err(RunError::Exec)
}

/// Failure of [`run_source`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Compile(Diagnostics),
    #[error("{0}")]
    Exec(ExecError),
}
