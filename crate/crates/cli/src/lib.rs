//! The `mini-omp` command line: run, check and inspect MK programs, and
//! benchmark the bundled kernels.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use miniomp_bench::{render, run_bench, BenchError, Format, Kernel, KernelSpec, SizeClass};
use miniomp_core::runtime::WARNING_PREFIX;
use miniomp_core::{compile_source, dump_regions, parse_source, print_program, run_lowered, Diagnostics, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIAGNOSTICS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_TRAP: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "mini-omp",
    version,
    about = "Directive-driven parallel execution of MK programs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile and execute a program.
    Run(SourceArgs),
    /// Parse, validate and lower a program without executing it.
    Check(SourceArgs),
    /// Print the canonical form of a program.
    DumpAst(SourceArgs),
    /// Print the outlined parallel regions of a program.
    DumpOmp(SourceArgs),
    /// Time a bundled kernel at several team sizes.
    Bench(BenchArgs),
}

#[derive(Debug, clap::Args)]
pub struct SourceArgs {
    /// MK source file.
    pub file: PathBuf,
    /// Team size for regions without a num_threads clause.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,
}

#[derive(Debug, clap::Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub kernel: Kernel,
    #[arg(long, default_value = "S")]
    pub class: SizeClass,
    /// Comma-separated team sizes; must include 1.
    #[arg(long, value_delimiter = ',', required = true, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Vec<u32>,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    pub repeats: u32,
    #[arg(long, default_value = "table")]
    pub format: Format,
}

/// Runs the command line `args` (including the program name) and returns
/// the process exit status.
pub fn execute_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
    };
    let status = match cli.command {
        Command::Bench(a) => bench(&a, out, err),
        Command::Run(a) => match read_source(&a, err) {
            Ok((file, src)) => run(&file, &src, a.threads, out, err),
            Err(code) => code,
        },
        Command::Check(a) => match read_source(&a, err) {
            Ok((file, src)) => check(&file, &src, err),
            Err(code) => code,
        },
        Command::DumpAst(a) => match read_source(&a, err) {
            Ok((file, src)) => match parse_source(&src) {
                Ok(p) => {
                    let _ = write!(out, "{}", print_program(&p));
                    EXIT_OK
                }
                Err(d) => report(&file, &d, err),
            },
            Err(code) => code,
        },
        Command::DumpOmp(a) => match read_source(&a, err) {
            Ok((file, src)) => match compile_source(&src) {
                Ok(l) => {
                    let _ = write!(out, "{}", dump_regions(&l));
                    EXIT_OK
                }
                Err(d) => report(&file, &d, err),
            },
            Err(code) => code,
        },
    };
    let _ = out.flush();
    status
}

fn read_source(args: &SourceArgs, err: &mut dyn Write) -> Result<(String, String), i32> {
    let file = args.file.display().to_string();
    match std::fs::read_to_string(&args.file) {
        Ok(src) => Ok((file, src)),
        Err(e) => {
            let _ = writeln!(err, "mini-omp: cannot read {file}: {e}");
            Err(EXIT_USAGE)
        }
    }
}

fn report(file: &str, diags: &Diagnostics, err: &mut dyn Write) -> i32 {
    let _ = write!(err, "{}", diags.render(file));
    EXIT_DIAGNOSTICS
}

fn warn_all(warnings: &[String], err: &mut dyn Write) {
    for w in warnings {
        let _ = writeln!(err, "{WARNING_PREFIX} {w}");
    }
}

fn check(file: &str, src: &str, err: &mut dyn Write) -> i32 {
    match compile_source(src) {
        Ok(_) => EXIT_OK,
        Err(d) => report(file, &d, err),
    }
}

fn run(file: &str, src: &str, threads: Option<u32>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let lowered = match compile_source(src) {
        Ok(l) => l,
        Err(d) => return report(file, &d, err),
    };
    let config = RunConfig {
        threads: threads.map(|t| t as usize),
        ..RunConfig::default()
    };
    match run_lowered(&lowered, &config) {
        Ok(o) => {
            let _ = write!(out, "{}", o.printed);
            warn_all(&o.warnings, err);
            o.exit_status as i32
        }
        Err(e) => {
            let _ = write!(out, "{}", e.output.printed);
            warn_all(&e.output.warnings, err);
            let _ = match e.trap.pos() {
                Some(_) => writeln!(err, "{file}:{e}"),
                None => writeln!(err, "{file}: {e}"),
            };
            EXIT_TRAP
        }
    }
}

fn bench(args: &BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let threads: Vec<usize> = args.threads.iter().map(|&t| t as usize).collect();
    let spec = KernelSpec::new(args.kernel, args.class);
    match run_bench(&spec, &threads, args.repeats as usize) {
        Ok(report) => {
            let _ = write!(out, "{}", render(&[report], args.format));
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "mini-omp: {e}");
            match e {
                BenchError::BaselineMissing | BenchError::InvalidRequest(_) => EXIT_USAGE,
                BenchError::Trapped { .. } => EXIT_TRAP,
                BenchError::Compile { .. } | BenchError::VerificationFailed { .. } => EXIT_DIAGNOSTICS,
            }
        }
    }
}
