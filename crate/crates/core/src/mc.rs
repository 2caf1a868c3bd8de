//! Path-indexed Monte Carlo plumbing.
//!
//! Every path is a pure function of its index, so the parallel and the
//! sequential back ends return identical vectors, and all reductions use a
//! fixed pairwise order.

use serde::{Deserialize, Serialize};

/// Evaluates `f(0), ..., f(n - 1)` and returns the results in index order.
/// Runs on the rayon pool when the `parallel` feature is enabled.
pub fn map_paths<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_paths_parallel(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_paths_sequential(n, f)
    }
}

pub fn map_paths_sequential<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_paths_parallel<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Sum with pairwise splitting; the result depends only on the input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    /// Unbiased sample standard deviation.
    pub std_dev: f64,
    /// `std_dev / sqrt(n)`.
    pub std_error: f64,
    pub n: usize,
}

pub fn sample_stats(xs: &[f64]) -> SampleStats {
    let n = xs.len();
    if n == 0 {
        return SampleStats { mean: f64::NAN, std_dev: f64::NAN, std_error: f64::NAN, n };
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return SampleStats { mean, std_dev: 0.0, std_error: 0.0, n };
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    let std_dev = var.sqrt();
    SampleStats { mean, std_dev, std_error: std_dev / (n as f64).sqrt(), n }
}
