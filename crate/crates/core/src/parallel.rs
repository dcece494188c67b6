//! Deterministic data-parallel reductions.
//!
//! Work is split into fixed-size blocks whose boundaries depend only on the
//! problem size. Each block is reduced sequentially and the block results are
//! combined by a balanced pairwise tree, so sums are bitwise identical for any
//! number of worker threads.

use rayon::prelude::*;

use crate::error::Result;

/// Block length for index-range reductions.
pub const BLOCK: u64 = 4096;

/// Pairwise (balanced tree) sum in a fixed order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Sums `f(i)` over `start..=end` with deterministic blocking.
pub fn sum_range<F>(start: u64, end: u64, f: F) -> Result<f64>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    if end < start {
        return Ok(0.0);
    }
    let count = end - start + 1;
    let blocks = count.div_ceil(BLOCK);
    let partials: Vec<f64> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = start + b * BLOCK;
            let hi = (lo + BLOCK - 1).min(end);
            let mut acc = 0.0;
            for i in lo..=hi {
                acc += f(i)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&partials))
}

/// Runs `op` on a dedicated pool with `threads` workers (`0` = rayon default).
pub fn with_threads<R: Send>(threads: usize, op: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(op),
        Err(_) => op(),
    }
}
