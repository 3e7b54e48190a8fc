//! Thread teams: barrier, per-loop shared state, and fork/join.

use std::any::Any;
use std::cell::Cell;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use thiserror::Error;

/// Raised in members blocked on (or arriving at) a barrier after another
/// member of the team failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("team cancelled after a member failed")]
pub struct Cancelled;

/// Errors a team member may return from its body.
pub trait MemberError: From<Cancelled> + Send {
    /// True for the secondary errors produced by [`Cancelled`].
    fn is_cancellation(&self) -> bool;
}

/// Stack reserved for each spawned team member; region bodies may recurse.
pub const MEMBER_STACK_BYTES: usize = 64 << 20;

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

#[derive(Debug)]
struct BarrierState {
    arrived: usize,
    generation: u64,
    cancelled: bool,
}

/// Reusable counting barrier with a generation counter.
#[derive(Debug)]
pub struct Barrier {
    size: usize,
    state: Mutex<BarrierState>,
    cv: Condvar,
}

impl Barrier {
    pub fn new(size: usize) -> Self {
        assert!(size >= 1, "barrier of zero members");
        Self {
            size,
            state: Mutex::new(BarrierState {
                arrived: 0,
                generation: 0,
                cancelled: false,
            }),
            cv: Condvar::new(),
        }
    }

    /// Blocks until all members have arrived at this episode.
    pub fn wait(&self) -> Result<(), Cancelled> {
        let mut st = lock(&self.state);
        if st.cancelled {
            return Err(Cancelled);
        }
        st.arrived += 1;
        if st.arrived == self.size {
            st.arrived = 0;
            st.generation += 1;
            self.cv.notify_all();
            return Ok(());
        }
        let gen = st.generation;
        while st.generation == gen && !st.cancelled {
            st = self.cv.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        if st.generation == gen {
            Err(Cancelled)
        } else {
            Ok(())
        }
    }

    /// Number of completed episodes.
    pub fn generation(&self) -> u64 {
        lock(&self.state).generation
    }

    /// Releases current and future waiters with [`Cancelled`].
    pub fn cancel(&self) {
        lock(&self.state).cancelled = true;
        self.cv.notify_all();
    }
}

/// State shared by the members of one team.
pub struct TeamContext {
    size: usize,
    barrier: Barrier,
    cancelled: AtomicBool,
    /// Per-construct shared state, indexed by the order in which each member
    /// encounters worksharing constructs (identical across members).
    workshares: Mutex<Vec<Arc<dyn Any + Send + Sync>>>,
}

impl std::fmt::Debug for TeamContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TeamContext")
            .field("size", &self.size)
            .field("barrier", &self.barrier)
            .finish_non_exhaustive()
    }
}

impl TeamContext {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            barrier: Barrier::new(size),
            cancelled: AtomicBool::new(false),
            workshares: Mutex::new(Vec::new()),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn barrier(&self) -> Result<(), Cancelled> {
        self.barrier.wait()
    }

    pub fn cancel(&self) {
        self.cancelled.store(true, Ordering::Relaxed);
        self.barrier.cancel();
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancelled.load(Ordering::Relaxed)
    }

    /// Shared state of the `seq`-th worksharing construct. The first member
    /// to arrive creates it with `init`; later arrivals get the same value.
    ///
    /// # Panics
    /// If a member arrives out of sequence or with a different state type,
    /// which means members disagree on the constructs they encounter.
    pub fn workshare<T, F>(&self, seq: usize, init: F) -> Arc<T>
    where
        T: Any + Send + Sync,
        F: FnOnce() -> T,
    {
        let mut ws = lock(&self.workshares);
        if seq == ws.len() {
            ws.push(Arc::new(init()));
        }
        let entry = ws
            .get(seq)
            .unwrap_or_else(|| panic!("worksharing construct {seq} reached out of order"))
            .clone();
        entry
            .downcast::<T>()
            .unwrap_or_else(|_| panic!("worksharing construct {seq} has a different kind in another member"))
    }
}

/// One member's view of its team.
#[derive(Debug, Clone, Copy)]
pub struct Member<'a> {
    pub tid: usize,
    pub team: &'a TeamContext,
}

impl Member<'_> {
    pub fn team_size(&self) -> usize {
        self.team.size()
    }
}

/// Releases the rest of the team if a member unwinds.
struct CancelOnPanic<'a>(&'a TeamContext);

impl Drop for CancelOnPanic<'_> {
    fn drop(&mut self) {
        if std::thread::panicking() {
            self.0.cancel();
        }
    }
}

thread_local! {
    static IN_TEAM: Cell<bool> = const { Cell::new(false) };
}

struct TeamScope {
    previous: bool,
}

impl TeamScope {
    fn enter() -> Self {
        Self {
            previous: IN_TEAM.with(|c| c.replace(true)),
        }
    }
}

impl Drop for TeamScope {
    fn drop(&mut self) {
        IN_TEAM.with(|c| c.set(self.previous));
    }
}

/// True while the current thread executes a team member's body.
pub fn in_team() -> bool {
    IN_TEAM.with(|c| c.get())
}

/// Runs `body` once per member of a team of `size` and joins them.
///
/// Member 0 runs on the calling thread. When a member fails, the team is
/// cancelled so members blocked on a barrier are released, all members are
/// joined, and the error of the lowest failing tid is returned (errors that
/// only report the cancellation are ranked after real ones).
pub fn run_team<E, F>(size: usize, body: F) -> Result<(), E>
where
    E: MemberError,
    F: Fn(Member<'_>) -> Result<(), E> + Sync,
{
    assert!(size >= 1, "team of zero members");
    let team = TeamContext::new(size);
    let run_member = |tid: usize| {
        let _scope = TeamScope::enter();
        let _guard = CancelOnPanic(&team);
        let result = body(Member { tid, team: &team });
        if result.is_err() {
            team.cancel();
        }
        result
    };
    let mut results: Vec<Result<(), E>> = Vec::with_capacity(size);
    std::thread::scope(|s| {
        let handles: Vec<_> = (1..size)
            .map(|tid| {
                let run_member = &run_member;
                std::thread::Builder::new()
                    .name(format!("miniomp-{tid}"))
                    .stack_size(MEMBER_STACK_BYTES)
                    .spawn_scoped(s, move || run_member(tid))
                    .expect("failed to spawn team thread")
            })
            .collect();
        results.push(run_member(0));
        for h in handles {
            match h.join() {
                Ok(r) => results.push(r),
                Err(panic) => std::panic::resume_unwind(panic),
            }
        }
    });
    let mut first_cancel = None;
    for r in results {
        if let Err(e) = r {
            if !e.is_cancellation() {
                return Err(e);
            }
            first_cancel.get_or_insert(e);
        }
    }
    first_cancel.map_or(Ok(()), Err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU64, AtomicUsize};

    #[derive(Debug, PartialEq)]
    enum TestError {
        Cancelled,
        Failed(usize),
    }

    impl From<Cancelled> for TestError {
        fn from(_: Cancelled) -> Self {
            TestError::Cancelled
        }
    }

    impl MemberError for TestError {
        fn is_cancellation(&self) -> bool {
            matches!(self, TestError::Cancelled)
        }
    }

    #[test]
    fn single_member_barrier_returns_immediately() {
        let b = Barrier::new(1);
        b.wait().unwrap();
        b.wait().unwrap();
        assert_eq!(b.generation(), 2);
    }

    #[test]
    fn barrier_litmus_and_reuse() {
        const T: usize = 4;
        for _ in 0..50 {
            let flags: Vec<AtomicU64> = (0..T).map(|_| AtomicU64::new(0)).collect();
            let failures = AtomicUsize::new(0);
            run_team::<TestError, _>(T, |m| {
                for round in 1..=3u64 {
                    flags[m.tid].store(round, Ordering::Relaxed);
                    m.team.barrier()?;
                    if flags.iter().any(|f| f.load(Ordering::Relaxed) < round) {
                        failures.fetch_add(1, Ordering::Relaxed);
                    }
                    m.team.barrier()?;
                }
                Ok(())
            })
            .unwrap();
            assert_eq!(failures.load(Ordering::Relaxed), 0);
        }
    }

    #[test]
    fn every_member_runs_once_and_join_is_sound() {
        let live = AtomicUsize::new(0);
        let out: Vec<AtomicUsize> = (0..4).map(|_| AtomicUsize::new(usize::MAX)).collect();
        run_team::<TestError, _>(4, |m| {
            live.fetch_add(1, Ordering::SeqCst);
            std::thread::yield_now();
            out[m.tid].store(m.tid, Ordering::Relaxed);
            live.fetch_sub(1, Ordering::SeqCst);
            Ok(())
        })
        .unwrap();
        assert_eq!(live.load(Ordering::SeqCst), 0);
        let mut seen: Vec<usize> = out.iter().map(|v| v.load(Ordering::Relaxed)).collect();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }

    #[test]
    fn lowest_tid_error_wins_and_waiters_are_released() {
        let r = run_team::<TestError, _>(4, |m| {
            if m.tid == 3 || m.tid == 2 {
                return Err(TestError::Failed(m.tid));
            }
            // Members 0 and 1 would deadlock here without cancellation.
            m.team.barrier()?;
            Ok(())
        });
        assert_eq!(r, Err(TestError::Failed(2)));
    }

    #[test]
    fn workshare_state_is_shared_by_sequence() {
        let created = AtomicUsize::new(0);
        run_team::<TestError, _>(3, |m| {
            let a = m.team.workshare(0, || {
                created.fetch_add(1, Ordering::Relaxed);
                AtomicUsize::new(0)
            });
            a.fetch_add(1, Ordering::Relaxed);
            m.team.barrier()?;
            assert_eq!(a.load(Ordering::Relaxed), 3);
            Ok(())
        })
        .unwrap();
        assert_eq!(created.load(Ordering::Relaxed), 1);
    }

    #[test]
    fn membership_flag_is_scoped() {
        assert!(!in_team());
        run_team::<TestError, _>(2, |_| {
            assert!(in_team());
            Ok(())
        })
        .unwrap();
        assert!(!in_team());
    }
}
