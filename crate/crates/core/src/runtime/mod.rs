//! Fork/join worksharing runtime.

pub mod reduce;
pub mod schedule;
pub mod team;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

pub use reduce::{combine, reduction_identity, ReduceError, ReductionTable, Scalar, ScalarKind};
pub use schedule::{iteration_count, static_chunks, InvalidLoop, IterationChunk, LoopDispatch};
pub use team::{in_team, run_team, Barrier, Cancelled, Member, MemberError, TeamContext};

/// Environment variable consulted for the default team size.
pub const THREADS_ENV: &str = "MINIOMP_NUM_THREADS";

/// Prefix of every line written to the warning channel.
pub const WARNING_PREFIX: &str = "miniomp: warning:";

pub const NESTED_WARNING: &str = "nested parallel region serialized to a team of 1";

/// Team size from, in decreasing precedence: a `num_threads` clause, the
/// command-line override, the environment value, and hardware parallelism.
///
/// Returns the size and, if the environment value was present but not a
/// positive integer, a warning describing it.
pub fn resolve_threads(
    clause: Option<u32>,
    cli: Option<usize>,
    env: Option<&str>,
    hardware: usize,
) -> (usize, Option<String>) {
    let mut warning = None;
    let env_value = env.and_then(|raw| match raw.trim().parse::<usize>() {
        Ok(n) if n >= 1 => Some(n),
        _ => {
            warning = Some(format!("ignoring {THREADS_ENV}={raw:?}: expected a positive integer"));
            None
        }
    });
    let size = clause
        .map(|n| n as usize)
        .or(cli)
        .or(env_value)
        .unwrap_or(hardware)
        .max(1);
    (size, warning)
}

pub fn hardware_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Per-execution runtime state: the default team size and the warning
/// channel.
#[derive(Debug)]
pub struct Runtime {
    cli_threads: Option<usize>,
    env_threads: Option<String>,
    hardware: usize,
    warnings: Mutex<Vec<String>>,
    nested_warned: AtomicBool,
    env_warned: AtomicBool,
    region_time: Mutex<Duration>,
}

impl Runtime {
    /// Runtime reading the environment and hardware parallelism.
    pub fn new(cli_threads: Option<usize>) -> Self {
        Self::with_sources(cli_threads, std::env::var(THREADS_ENV).ok(), hardware_threads())
    }

    pub fn with_sources(cli_threads: Option<usize>, env_threads: Option<String>, hardware: usize) -> Self {
        Self {
            cli_threads,
            env_threads,
            hardware,
            warnings: Mutex::new(Vec::new()),
            nested_warned: AtomicBool::new(false),
            env_warned: AtomicBool::new(false),
            region_time: Mutex::new(Duration::ZERO),
        }
    }

    /// Team size for a region with the given `num_threads` clause.
    pub fn team_size(&self, clause: Option<u32>) -> usize {
        let (size, warning) = resolve_threads(clause, self.cli_threads, self.env_threads.as_deref(), self.hardware);
        if let Some(w) = warning {
            if !self.env_warned.swap(true, Ordering::Relaxed) {
                self.warn(w);
            }
        }
        size
    }

    pub fn warn(&self, message: impl Into<String>) {
        self.warnings
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(message.into());
    }

    pub fn warnings(&self) -> Vec<String> {
        self.warnings.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Team size for a region about to be forked from the current thread.
    /// A region reached from inside a team is serialized to a team of one,
    /// with a warning the first time this happens.
    pub fn plan_fork(&self, clause: Option<u32>) -> usize {
        if in_team() {
            if !self.nested_warned.swap(true, Ordering::Relaxed) {
                self.warn(NESTED_WARNING);
            }
            1
        } else {
            self.team_size(clause)
        }
    }

    /// Starts a team for a region and joins it. Time spent in teams forked
    /// from outside any team is accumulated in [`Runtime::region_seconds`].
    pub fn fork_call<E, F>(&self, clause: Option<u32>, body: F) -> Result<(), E>
    where
        E: MemberError,
        F: Fn(Member<'_>) -> Result<(), E> + Sync,
    {
        let outermost = !in_team();
        let size = self.plan_fork(clause);
        let start = Instant::now();
        let result = run_team(size, body);
        if outermost {
            self.record_region(start.elapsed());
        }
        result
    }

    pub fn record_region(&self, elapsed: Duration) {
        *self.region_time.lock().unwrap_or_else(|e| e.into_inner()) += elapsed;
    }

    /// Total wall-clock time spent in outermost regions.
    pub fn region_seconds(&self) -> f64 {
        self.region_time.lock().unwrap_or_else(|e| e.into_inner()).as_secs_f64()
    }
}
