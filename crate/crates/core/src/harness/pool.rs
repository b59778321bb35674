//! Deterministic worker-pool primitives.
//!
//! Worker count defaults to the hardware parallelism, capped by the
//! `SWARM_NUM_THREADS` environment variable and by the task count. Every
//! reduction is index-ordered — merged output is worker 0's results, then
//! worker 1's, and so on — so completion timing never affects results. A
//! given worker count reproduces bit-identically; the count itself is part
//! of a run's identity (it partitions the action streams) and is recorded
//! in the run manifest.

use std::num::NonZeroUsize;
use std::ops::Range;

#[derive(Clone, Copy, Debug)]
pub struct WorkerPool {
    n_workers: usize,
}

impl WorkerPool {
    /// A pool of `min(max_workers, SWARM_NUM_THREADS or hardware threads)`
    /// workers, at least one.
    pub fn new(max_workers: usize) -> Self {
        let hw = std::thread::available_parallelism().map(NonZeroUsize::get).unwrap_or(1);
        let cap = std::env::var("SWARM_NUM_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .unwrap_or(hw);
        WorkerPool { n_workers: cap.min(max_workers).max(1) }
    }

    /// A pool with an explicit worker count (tests).
    pub fn with_workers(n_workers: usize) -> Self {
        assert!(n_workers >= 1);
        WorkerPool { n_workers }
    }

    pub fn n_workers(&self) -> usize {
        self.n_workers
    }

    /// Run one closure per worker state concurrently; results come back in
    /// worker order. A single-state pool runs inline.
    pub fn run<S: Send, T: Send>(
        &self,
        states: &mut [S],
        f: impl Fn(usize, &mut S) -> T + Sync,
    ) -> Vec<T> {
        if states.len() <= 1 {
            return states.iter_mut().enumerate().map(|(w, s)| f(w, s)).collect();
        }
        let f = &f;
        std::thread::scope(|scope| {
            let handles: Vec<_> = states
                .iter_mut()
                .enumerate()
                .map(|(w, s)| scope.spawn(move || f(w, s)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        })
    }
}

/// Contiguous near-even partition of `0..n_items` into `n_parts` ranges;
/// the first `n_items % n_parts` ranges get one extra item. Empty ranges
/// are dropped, so over-provisioned pools shrink to the work available.
pub fn partition(n_items: usize, n_parts: usize) -> Vec<Range<usize>> {
    assert!(n_parts >= 1);
    let base = n_items / n_parts;
    let extra = n_items % n_parts;
    let mut ranges = Vec::new();
    let mut start = 0;
    for part in 0..n_parts {
        let len = base + usize::from(part < extra);
        if len > 0 {
            ranges.push(start..start + len);
            start += len;
        }
    }
    ranges
}
