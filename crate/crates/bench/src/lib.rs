//! Bundled MK kernels and a harness that times them at several team sizes.
//!
//! Each kernel is an MK library; [`KernelSpec::source`] appends a `main`
//! that calls it with the parameters of the chosen size class. Timing covers
//! parallel region execution only, as reported by the runtime.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use miniomp_core::runtime::hardware_threads;
use miniomp_core::{compile_source, run_lowered, ExternRegistry, LoweredProgram, RunConfig};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Mandelbrot,
    Ep,
    Is,
    Cg,
}

impl Kernel {
    pub const ALL: [Kernel; 4] = [Kernel::Mandelbrot, Kernel::Ep, Kernel::Is, Kernel::Cg];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Mandelbrot => "mandelbrot",
            Kernel::Ep => "ep",
            Kernel::Is => "is",
            Kernel::Cg => "cg",
        }
    }

    /// The kernel's MK library source.
    pub fn library(self) -> &'static str {
        match self {
            Kernel::Mandelbrot => include_str!("../kernels/mandelbrot.mk"),
            Kernel::Ep => include_str!("../kernels/ep.mk"),
            Kernel::Is => include_str!("../kernels/is.mk"),
            Kernel::Cg => include_str!("../kernels/cg.mk"),
        }
    }

    /// Path of the library relative to the bench crate root.
    pub fn source_path(self) -> String {
        format!("kernels/{}.mk", self.name())
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Kernel::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown kernel `{s}` (expected mandelbrot, ep, is or cg)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SizeClass {
    S,
    W,
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SizeClass::S => "S",
            SizeClass::W => "W",
        })
    }
}

impl FromStr for SizeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "S" | "s" => Ok(SizeClass::S),
            "W" | "w" => Ok(SizeClass::W),
            _ => Err(format!("unknown size class `{s}` (expected S or W)")),
        }
    }
}

/// How a run's printed output is checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verification {
    /// Output identical to the single-thread run.
    ExactMatch,
    /// Sorted output that is a permutation of the input (by checksums).
    SortedPermutation,
    /// Residual below `residual`; solution invariant within `relative` of
    /// the single-thread run.
    Tolerance { residual: f64, relative: f64 },
}

/// A kernel at a size class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KernelSpec {
    pub kernel: Kernel,
    pub class: SizeClass,
}

impl KernelSpec {
    pub fn new(kernel: Kernel, class: SizeClass) -> Self {
        Self { kernel, class }
    }

    /// Arguments passed to the kernel entry point.
    pub fn params(&self) -> Vec<i64> {
        let w = matches!(self.class, SizeClass::W);
        match self.kernel {
            // W doubles both image dimensions: four times the pixels.
            Kernel::Mandelbrot if w => vec![1024, 1024, 1000],
            Kernel::Mandelbrot => vec![512, 512, 1000],
            // log2 pair count and stream seed
            Kernel::Ep if w => vec![22, 271_828_183],
            Kernel::Ep => vec![20, 271_828_183],
            // log2 key count and log2 key range
            Kernel::Is if w => vec![22, 10],
            Kernel::Is => vec![20, 10],
            // matrix order and iteration count
            Kernel::Cg if w => vec![16_384, 25],
            Kernel::Cg => vec![4096, 25],
        }
    }

    pub fn verification(&self) -> Verification {
        match self.kernel {
            Kernel::Mandelbrot | Kernel::Ep => Verification::ExactMatch,
            Kernel::Is => Verification::SortedPermutation,
            Kernel::Cg => Verification::Tolerance {
                residual: 1e-8,
                relative: 1e-10,
            },
        }
    }

    fn entry(&self) -> &'static str {
        match self.kernel {
            Kernel::Mandelbrot => "mandelbrot",
            Kernel::Ep => "ep",
            Kernel::Is => "is_sort",
            Kernel::Cg => "cg",
        }
    }

    /// Complete program: the kernel library and a generated `main`.
    pub fn source(&self) -> String {
        let args: Vec<String> = self.params().iter().map(i64::to_string).collect();
        format!(
            "{}\nfn main() {{\n    {}({});\n}}\n",
            self.kernel.library(),
            self.entry(),
            args.join(", ")
        )
    }

    pub fn compile(&self) -> Result<LoweredProgram, BenchError> {
        compile_source(&self.source()).map_err(|d| BenchError::Compile {
            kernel: self.kernel,
            message: d.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("thread list must include 1 for the speedup baseline")]
    BaselineMissing,
    #[error("invalid benchmark request: {0}")]
    InvalidRequest(String),
    #[error("{kernel} failed verification at {threads} threads, repetition {repetition}: {reason}")]
    VerificationFailed {
        kernel: Kernel,
        threads: usize,
        repetition: usize,
        reason: String,
    },
    #[error("{kernel} does not compile: {message}")]
    Compile { kernel: Kernel, message: String },
    #[error("{kernel} trapped at {threads} threads: {message}")]
    Trapped {
        kernel: Kernel,
        threads: usize,
        message: String,
    },
}

/// Result of one kernel execution.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRun {
    pub printed: String,
    pub region_seconds: f64,
}

/// Runs a compiled kernel once with a fixed team size.
pub fn run_kernel(spec: &KernelSpec, program: &LoweredProgram, threads: usize) -> Result<KernelRun, BenchError> {
    let config = RunConfig {
        threads: Some(threads),
        env_threads: None,
        hardware: hardware_threads(),
        externs: ExternRegistry::empty(),
        echo: false,
    };
    let out = run_lowered(program, &config).map_err(|e| BenchError::Trapped {
        kernel: spec.kernel,
        threads,
        message: e.to_string(),
    })?;
    Ok(KernelRun {
        printed: out.printed,
        region_seconds: out.region_seconds,
    })
}

fn numbers(printed: &str) -> Vec<Vec<f64>> {
    printed
        .lines()
        .map(|l| l.split_whitespace().map(|w| w.parse().unwrap_or(f64::NAN)).collect())
        .collect()
}

/// Checks `printed` against the kernel's verification rule. `baseline` is
/// the single-thread output, which is required for rules that compare to it.
pub fn verify(spec: &KernelSpec, baseline: Option<&str>, printed: &str) -> Result<(), String> {
    let need_baseline = || baseline.ok_or_else(|| "no single-thread baseline to compare with".to_string());
    match spec.verification() {
        Verification::ExactMatch => {
            let base = need_baseline()?;
            if printed != base {
                return Err(format!("output {printed:?} differs from single-thread output {base:?}"));
            }
            if spec.kernel == Kernel::Ep {
                let rows = numbers(printed);
                let accepted = rows.first().and_then(|r| r.first()).copied().unwrap_or(f64::NAN);
                let binned: f64 = rows.iter().skip(1).filter_map(|r| r.get(1)).sum();
                if binned > accepted {
                    return Err(format!("annulus counts {binned} exceed accepted pairs {accepted}"));
                }
            }
            Ok(())
        }
        Verification::SortedPermutation => match numbers(printed).first().map(Vec::as_slice) {
            Some(&[ordered, sum_in, sum_out, sq_in, sq_out]) => {
                if ordered != 1.0 {
                    Err("output is not sorted".into())
                } else if sum_in != sum_out || sq_in != sq_out {
                    Err(format!(
                        "output is not a permutation of the input (checksums {sum_in}/{sq_in} vs {sum_out}/{sq_out})"
                    ))
                } else {
                    Ok(())
                }
            }
            _ => Err(format!("unexpected output {printed:?}")),
        },
        Verification::Tolerance { residual, relative } => {
            let parse = |s: &str| match numbers(s).first().map(Vec::as_slice) {
                Some(&[r, inv]) => Ok((r, inv)),
                _ => Err(format!("unexpected output {s:?}")),
            };
            let (r, inv) = parse(printed)?;
            if r.is_nan() || r >= residual {
                return Err(format!("residual norm {r:e} is not below {residual:e}"));
            }
            let (_, base) = parse(need_baseline()?)?;
            let diff = (inv - base).abs();
            if diff.is_nan() || diff > relative * base.abs() {
                return Err(format!("invariant {inv:?} differs from single-thread value {base:?}"));
            }
            Ok(())
        }
    }
}

/// One timed execution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub threads: usize,
    pub repetition: usize,
    pub seconds: f64,
}

/// Timings of one kernel at several team sizes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub kernel: Kernel,
    pub class: SizeClass,
    /// Hardware parallelism available when the report was taken.
    pub hardware_threads: usize,
    pub samples: Vec<Sample>,
    /// Median seconds per team size.
    pub medians: BTreeMap<usize, f64>,
    /// Median at one thread divided by the median at each team size.
    pub speedups: BTreeMap<usize, f64>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

impl BenchReport {
    /// Builds a report, deriving medians and speedups from the samples.
    pub fn from_samples(
        kernel: Kernel,
        class: SizeClass,
        hardware_threads: usize,
        samples: Vec<Sample>,
    ) -> Result<Self, BenchError> {
        let mut by_threads: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for s in &samples {
            by_threads.entry(s.threads).or_default().push(s.seconds);
        }
        let medians: BTreeMap<usize, f64> = by_threads.iter().map(|(&t, v)| (t, median(v))).collect();
        let base = *medians.get(&1).ok_or(BenchError::BaselineMissing)?;
        let speedups = medians
            .iter()
            .map(|(&t, &m)| (t, if t == 1 { 1.0 } else { base / m }))
            .collect();
        Ok(Self {
            kernel,
            class,
            hardware_threads,
            samples,
            medians,
            speedups,
        })
    }
}

/// Runs `spec` `repeats` times at each team size in `threads`, verifying
/// every run. The single-thread runs come first and serve as the baseline.
pub fn run_bench(spec: &KernelSpec, threads: &[usize], repeats: usize) -> Result<BenchReport, BenchError> {
    if !threads.contains(&1) {
        return Err(BenchError::BaselineMissing);
    }
    if repeats == 0 {
        return Err(BenchError::InvalidRequest("repeats must be at least 1".into()));
    }
    if threads.contains(&0) {
        return Err(BenchError::InvalidRequest("thread counts must be positive".into()));
    }
    let mut order: Vec<usize> = vec![1];
    for &t in threads {
        if !order.contains(&t) {
            order.push(t);
        }
    }
    let program = spec.compile()?;
    let mut baseline: Option<String> = None;
    let mut samples = Vec::with_capacity(order.len() * repeats);
    for &t in &order {
        for rep in 0..repeats {
            let run = run_kernel(spec, &program, t)?;
            if baseline.is_none() && spec.verification() != Verification::SortedPermutation {
                baseline = Some(run.printed.clone());
            }
            verify(spec, baseline.as_deref(), &run.printed).map_err(|reason| BenchError::VerificationFailed {
                kernel: spec.kernel,
                threads: t,
                repetition: rep,
                reason,
            })?;
            samples.push(Sample {
                threads: t,
                repetition: rep,
                seconds: run.region_seconds,
            });
        }
    }
    BenchReport::from_samples(spec.kernel, spec.class, hardware_threads(), samples)
}

/// One row of a speedup table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedupRow {
    pub threads: usize,
    pub median_seconds: f64,
    pub speedup: f64,
}

/// Rows ordered by team size.
pub fn speedup_table(report: &BenchReport) -> Vec<SpeedupRow> {
    report
        .medians
        .iter()
        .map(|(&threads, &median_seconds)| SpeedupRow {
            threads,
            median_seconds,
            speedup: report.speedups[&threads],
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Format::Table),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format `{s}` (expected table, csv or json)")),
        }
    }
}

/// CSV with a header row; seconds with six decimals.
pub fn to_csv(reports: &[BenchReport]) -> String {
    let mut out = String::from("kernel,class,threads,repetition,seconds\n");
    for r in reports {
        for s in &r.samples {
            out.push_str(&format!(
                "{},{},{},{},{:.6}\n",
                r.kernel, r.class, s.threads, s.repetition, s.seconds
            ));
        }
    }
    out
}

/// One JSON document holding every report.
pub fn to_json(reports: &[BenchReport]) -> String {
    let doc = serde_json::json!({ "reports": reports });
    let mut s = serde_json::to_string_pretty(&doc).expect("reports serialize");
    s.push('\n');
    s
}

/// Human-readable speedup table.
pub fn to_table(reports: &[BenchReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&format!(
            "{} class {} ({} samples, {} hardware threads)\n",
            r.kernel,
            r.class,
            r.samples.len(),
            r.hardware_threads
        ));
        out.push_str(&format!("{:>8}  {:>14}  {:>8}\n", "threads", "median (s)", "speedup"));
        for row in speedup_table(r) {
            out.push_str(&format!(
                "{:>8}  {:>14.6}  {:>8.2}\n",
                row.threads, row.median_seconds, row.speedup
            ));
        }
    }
    out
}

pub fn render(reports: &[BenchReport], format: Format) -> String {
    match format {
        Format::Table => to_table(reports),
        Format::Csv => to_csv(reports),
        Format::Json => to_json(reports),
    }
}
