//! Worksharing loop schedulers.
//!
//! Iterations are numbered `0..N` where `N = ceil(max(0, upper - lower) / step)`;
//! iteration `k` runs the loop body with the induction variable set to
//! `lower + k * step`.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("invalid loop: step {step} is less than 1")]
pub struct InvalidLoop {
    pub step: i64,
}

/// Half-open range of induction values `[lower, upper)` visited with `step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterationChunk {
    pub lower: i64,
    pub upper: i64,
    pub step: i64,
}

impl IterationChunk {
    /// Induction values in this chunk, ascending.
    pub fn values(&self) -> impl Iterator<Item = i64> {
        let step = self.step;
        let upper = self.upper;
        std::iter::successors(Some(self.lower), move |&v| v.checked_add(step)).take_while(move |&v| v < upper)
    }

    pub fn len(&self) -> u64 {
        if self.upper <= self.lower {
            0
        } else {
            ((self.upper as i128 - self.lower as i128 + self.step as i128 - 1) / self.step as i128) as u64
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn iteration_count(lower: i64, upper: i64, step: i64) -> Result<u64, InvalidLoop> {
    if step < 1 {
        return Err(InvalidLoop { step });
    }
    let span = upper as i128 - lower as i128;
    if span <= 0 {
        return Ok(0);
    }
    Ok(((span + step as i128 - 1) / step as i128) as u64)
}

/// Chunk covering iteration numbers `[first, end)`.
fn chunk_of(lower: i64, upper: i64, step: i64, first: u64, end: u64) -> IterationChunk {
    let lo = lower as i128 + first as i128 * step as i128;
    let hi = (lower as i128 + end as i128 * step as i128).min(upper as i128);
    IterationChunk {
        lower: lo as i64,
        upper: hi as i64,
        step,
    }
}

/// Chunks assigned to `tid` in a team of `team` under `schedule(static[, chunk])`.
///
/// Without a chunk the space is split into contiguous blocks: the first
/// `N mod T` members get `ceil(N/T)` iterations, the rest `floor(N/T)`. With a
/// chunk `c`, chunks of `c` iterations are dealt round-robin: member `t` gets
/// chunks `t, t+T, t+2T, ...`.
pub fn static_chunks(
    lower: i64,
    upper: i64,
    step: i64,
    chunk: Option<u64>,
    tid: usize,
    team: usize,
) -> Result<Vec<IterationChunk>, InvalidLoop> {
    let n = iteration_count(lower, upper, step)?;
    assert!(team >= 1 && tid < team, "tid {tid} outside team of {team}");
    let (t, tid) = (team as u64, tid as u64);
    match chunk {
        None => {
            let (q, r) = (n / t, n % t);
            let (first, count) = if tid < r {
                (tid * (q + 1), q + 1)
            } else {
                (r * (q + 1) + (tid - r) * q, q)
            };
            if count == 0 {
                Ok(Vec::new())
            } else {
                Ok(vec![chunk_of(lower, upper, step, first, first + count)])
            }
        }
        Some(c) => {
            let c = c.max(1);
            let mut out = Vec::new();
            let mut k = tid;
            while let Some(first) = k.checked_mul(c).filter(|&f| f < n) {
                out.push(chunk_of(lower, upper, step, first, (first + c).min(n)));
                k += t;
            }
            Ok(out)
        }
    }
}

/// Shared claim cursor over one loop's iteration space, used by the dynamic
/// and guided schedules.
#[derive(Debug)]
pub struct LoopDispatch {
    lower: i64,
    upper: i64,
    step: i64,
    total: u64,
    cursor: AtomicU64,
}

impl LoopDispatch {
    pub fn new(lower: i64, upper: i64, step: i64) -> Result<Self, InvalidLoop> {
        Ok(Self {
            lower,
            upper,
            step,
            total: iteration_count(lower, upper, step)?,
            cursor: AtomicU64::new(0),
        })
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn remaining(&self) -> u64 {
        self.total.saturating_sub(self.cursor.load(Ordering::Relaxed))
    }

    /// Claims the next `chunk` unclaimed iterations (fewer at the end).
    pub fn dynamic_next(&self, chunk: u64) -> Option<IterationChunk> {
        let chunk = chunk.max(1);
        // Once past the end the cursor only moves by one chunk per late
        // caller, so it cannot wrap.
        let first = self.cursor.fetch_add(chunk, Ordering::Relaxed);
        if first >= self.total {
            return None;
        }
        let end = first.saturating_add(chunk).min(self.total);
        Some(chunk_of(self.lower, self.upper, self.step, first, end))
    }

    /// Claims `max(min_chunk, ceil(remaining / team))` iterations, clamped to
    /// what remains.
    pub fn guided_next(&self, team: usize, min_chunk: u64) -> Option<IterationChunk> {
        let team = team.max(1) as u64;
        let min_chunk = min_chunk.max(1);
        let mut first = self.cursor.load(Ordering::Relaxed);
        loop {
            if first >= self.total {
                return None;
            }
            let remaining = self.total - first;
            let size = remaining.div_ceil(team).max(min_chunk).min(remaining);
            match self
                .cursor
                .compare_exchange_weak(first, first + size, Ordering::Relaxed, Ordering::Relaxed)
            {
                Ok(_) => return Some(chunk_of(self.lower, self.upper, self.step, first, first + size)),
                Err(now) => first = now,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranges(chunks: &[IterationChunk]) -> Vec<(i64, i64)> {
        chunks.iter().map(|c| (c.lower, c.upper)).collect()
    }

    // Brute-force oracles: enumerate iteration numbers and deal them out.
    fn block_oracle(n: u64, t: u64, tid: u64) -> Vec<u64> {
        let mut owner = Vec::new();
        let mut next = 0;
        for member in 0..t {
            let share = n / t + u64::from(member < n % t);
            for _ in 0..share {
                owner.push(member);
                next += 1;
            }
        }
        assert_eq!(next, n);
        (0..n).filter(|&k| owner[k as usize] == tid).collect()
    }

    fn round_robin_oracle(n: u64, t: u64, c: u64, tid: u64) -> Vec<u64> {
        (0..n).filter(|k| (k / c) % t == tid).collect()
    }

    fn expand(chunks: &[IterationChunk], lower: i64, step: i64) -> Vec<u64> {
        chunks
            .iter()
            .flat_map(|c| c.values())
            .map(|v| ((v - lower) / step) as u64)
            .collect()
    }

    #[test]
    fn block_partition_example() {
        let got: Vec<_> = (0..4)
            .map(|tid| ranges(&static_chunks(0, 10, 1, None, tid, 4).unwrap()))
            .collect();
        assert_eq!(got, vec![vec![(0, 3)], vec![(3, 6)], vec![(6, 8)], vec![(8, 10)]]);
        for tid in 0..4 {
            assert_eq!(
                expand(&static_chunks(0, 10, 1, None, tid, 4).unwrap(), 0, 1),
                block_oracle(10, 4, tid as u64)
            );
        }
    }

    #[test]
    fn round_robin_example() {
        assert_eq!(
            ranges(&static_chunks(0, 10, 1, Some(2), 0, 2).unwrap()),
            vec![(0, 2), (4, 6), (8, 10)]
        );
        assert_eq!(
            ranges(&static_chunks(0, 10, 1, Some(2), 1, 2).unwrap()),
            vec![(2, 4), (6, 8)]
        );
        for tid in 0..3 {
            assert_eq!(
                expand(&static_chunks(5, 40, 3, Some(2), tid, 3).unwrap(), 5, 3),
                round_robin_oracle(12, 3, 2, tid as u64)
            );
        }
    }

    #[test]
    fn single_thread_identity_and_empty_members() {
        assert_eq!(ranges(&static_chunks(0, 77, 1, None, 0, 1).unwrap()), vec![(0, 77)]);
        assert!(static_chunks(0, 2, 1, None, 3, 4).unwrap().is_empty());
        assert!(static_chunks(5, 5, 1, None, 0, 1).unwrap().is_empty());
        assert!(static_chunks(9, 5, 1, Some(3), 0, 1).unwrap().is_empty());
        assert_eq!(static_chunks(0, 5, 0, None, 0, 1), Err(InvalidLoop { step: 0 }));
    }

    #[test]
    fn dynamic_sequence() {
        let d = LoopDispatch::new(0, 10, 1).unwrap();
        let mut got = Vec::new();
        while let Some(c) = d.dynamic_next(3) {
            got.push((c.lower, c.upper));
        }
        assert_eq!(got, vec![(0, 3), (3, 6), (6, 9), (9, 10)]);
        assert!(d.dynamic_next(3).is_none());

        assert!(LoopDispatch::new(0, 0, 1).unwrap().dynamic_next(1).is_none());
        let d = LoopDispatch::new(0, 5, 1).unwrap();
        assert_eq!(d.dynamic_next(5).map(|c| (c.lower, c.upper)), Some((0, 5)));
        assert!(d.dynamic_next(5).is_none());
    }

    /// Sequential application of max(min, ceil(rem/T)) clamped to rem.
    fn guided_oracle(n: u64, t: u64, min: u64) -> Vec<u64> {
        let mut rem = n;
        let mut out = Vec::new();
        while rem > 0 {
            let mut size = rem / t;
            if size * t < rem {
                size += 1;
            }
            let size = size.max(min).min(rem);
            out.push(size);
            rem -= size;
        }
        out
    }

    fn guided_sizes(n: i64, t: usize, min: u64) -> Vec<u64> {
        let d = LoopDispatch::new(0, n, 1).unwrap();
        std::iter::from_fn(|| d.guided_next(t, min)).map(|c| c.len()).collect()
    }

    #[test]
    fn guided_sequences() {
        let expected = guided_oracle(100, 4, 1);
        assert_eq!(expected, vec![25, 19, 14, 11, 8, 6, 5, 3, 3, 2, 1, 1, 1, 1]);
        assert_eq!(expected.iter().sum::<u64>(), 100);
        assert_eq!(guided_sizes(100, 4, 1), expected);
        assert_eq!(guided_sizes(100, 4, 50), vec![50, 50]);
        assert_eq!(guided_sizes(1, 7, 1), vec![1]);
        assert!(guided_sizes(0, 7, 1).is_empty());
    }

    #[test]
    fn chunk_values_respect_step() {
        let c = static_chunks(3, 20, 4, None, 0, 1).unwrap()[0];
        assert_eq!(c.values().collect::<Vec<_>>(), vec![3, 7, 11, 15, 19]);
        assert_eq!(c.len(), 5);
    }

    #[test]
    fn extreme_bounds_do_not_overflow() {
        let chunks = static_chunks(i64::MAX - 10, i64::MAX, 3, Some(2), 0, 1).unwrap();
        let vals: Vec<i64> = chunks.iter().flat_map(|c| c.values()).collect();
        assert_eq!(vals.len(), 4);
        assert_eq!(iteration_count(i64::MIN, i64::MAX, 1).unwrap(), u64::MAX);
    }
}
