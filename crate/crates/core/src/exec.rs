//! Execution of data-parallel inner loops.
//!
//! Every parallel site in the crate maps independent work items into an
//! index-ordered `Vec` and reduces that vector sequentially. The reduction
//! order is therefore fixed, so results are bit-identical across thread
//! counts and identical to the sequential build (`--no-default-features`).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, returning results in index order.
#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Maps `f` over `0..n`, returning results in index order.
#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
