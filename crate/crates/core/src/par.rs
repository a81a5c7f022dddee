//! Execution policy and reductions whose result does not depend on scheduling.
//!
//! Every reduction in the crate goes through [`block_accumulate`]: the index
//! range is cut into fixed blocks of [`BLOCK`] entries, each block is summed
//! left to right, and the block partials are merged by a fixed binary tree.
//! Blocks may be evaluated concurrently, the merge order never changes, so a
//! run with one worker and a run with many produce the same bits.

use std::cell::Cell;

pub const BLOCK: usize = 1024;

/// How data-parallel loops are executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

thread_local! {
    static OVERRIDE: Cell<Option<Exec>> = const { Cell::new(None) };
}

impl Exec {
    /// Policy in effect on this thread. Without the `parallel` feature this is
    /// always [`Exec::Sequential`].
    pub fn current() -> Exec {
        if !cfg!(feature = "parallel") {
            return Exec::Sequential;
        }
        OVERRIDE.with(|c| c.get()).unwrap_or(Exec::Parallel)
    }
}

/// Runs `f` with the given policy on the calling thread.
pub fn with_exec<R>(exec: Exec, f: impl FnOnce() -> R) -> R {
    struct Restore(Option<Exec>);
    impl Drop for Restore {
        fn drop(&mut self) {
            OVERRIDE.with(|c| c.set(self.0));
        }
    }
    let _restore = Restore(OVERRIDE.with(|c| c.replace(Some(exec))));
    f()
}

/// Applies `f(chunk_index, chunk)` to consecutive chunks of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if Exec::current() == Exec::Parallel {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// `(0..n).map(f).collect()`, in index order.
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if Exec::current() == Exec::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Maximum of `f(i)` over `0..n` (`-inf` when empty). Max is order independent.
pub fn max_by_index<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if Exec::current() == Exec::Parallel {
        use rayon::prelude::*;
        return (0..n)
            .into_par_iter()
            .map(f)
            .reduce(|| f64::NEG_INFINITY, f64::max);
    }
    (0..n).map(f).fold(f64::NEG_INFINITY, f64::max)
}

#[inline]
fn add_into<const K: usize>(acc: &mut [f64; K], other: &[f64; K]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a += *b;
    }
}

/// Fixed-shape pairwise merge of block partials.
pub fn tree_merge<const K: usize>(parts: &[[f64; K]]) -> [f64; K] {
    match parts.len() {
        0 => [0.0; K],
        1 => parts[0],
        n => {
            let (lo, hi) = parts.split_at(n / 2);
            let mut a = tree_merge(lo);
            add_into(&mut a, &tree_merge(hi));
            a
        }
    }
}

fn block_partial<const K: usize, F>(b: usize, n: usize, f: &F) -> [f64; K]
where
    F: Fn(usize, &mut [f64; K]),
{
    let mut acc = [0.0; K];
    for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
        f(i, &mut acc);
    }
    acc
}

/// Deterministic vector-valued sum: `f(i, acc)` adds the contribution of
/// index `i` into `acc`. Always sequential; intended for use inside an
/// already parallel loop.
pub fn block_accumulate<const K: usize, F>(n: usize, f: F) -> [f64; K]
where
    F: Fn(usize, &mut [f64; K]),
{
    let nb = n.div_ceil(BLOCK);
    if nb <= 1 {
        return block_partial(0, n, &f);
    }
    let parts: Vec<[f64; K]> = (0..nb).map(|b| block_partial(b, n, &f)).collect();
    tree_merge(&parts)
}

/// Same result as [`block_accumulate`], with blocks evaluated under the
/// current [`Exec`] policy.
pub fn par_block_accumulate<const K: usize, F>(n: usize, f: F) -> [f64; K]
where
    F: Fn(usize, &mut [f64; K]) + Sync + Send,
{
    let nb = n.div_ceil(BLOCK);
    if nb <= 1 {
        return block_partial(0, n, &f);
    }
    let parts = map_collect(nb, |b| block_partial(b, n, &f));
    tree_merge(&parts)
}

/// Deterministic scalar sum of a slice.
pub fn det_sum(values: &[f64]) -> f64 {
    par_block_accumulate::<1, _>(values.len(), |i, acc| acc[0] += values[i])[0]
}
