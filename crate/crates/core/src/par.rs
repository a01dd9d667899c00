//! Execution switch for the data-parallel loops.
//!
//! With the `parallel` feature (default) batch loops fan out over rayon's
//! global pool; without it every [`Execution`] runs serially. Results never
//! depend on the execution mode: parallel maps preserve input order and
//! reductions are done serially over the ordered partial results.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Order-preserving map over a slice.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Order-preserving map over `0..n`.
pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Number of shards used for chunked reductions. Fixed so that reductions
/// are identical whatever the thread count.
pub const SHARDS: usize = 16;

/// Splits `0..n` into at most [`SHARDS`] contiguous ranges.
pub fn shard_ranges(n: usize) -> Vec<std::ops::Range<usize>> {
    if n == 0 {
        return Vec::new();
    }
    let shards = SHARDS.min(n);
    let step = n.div_ceil(shards);
    (0..n)
        .step_by(step)
        .map(|start| start..(start + step).min(n))
        .collect()
}
