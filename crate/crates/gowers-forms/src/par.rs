//! Execution strategy for the data-parallel kernels. With the `parallel`
//! feature the outermost loop of bias, norm and correlation sums fans out on
//! rayon; reductions are exact integer sums or fixed-order float sums, so the
//! result never depends on the schedule.

use std::ops::Range;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Rayon when compiled with `parallel`; otherwise identical to `Sequential`.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// `Σ_{i ∈ range} f(i)` over exact integers.
pub fn sum_i128<F>(exec: Exec, range: Range<u64>, f: F) -> i128
where
    F: Fn(u64) -> i128 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return range.into_par_iter().map(f).sum();
    }
    let _ = exec;
    range.map(f).sum()
}

/// Maps every index, preserving order.
pub fn map_collect<T, F>(exec: Exec, range: Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return range.into_par_iter().map(f).collect();
    }
    let _ = exec;
    range.map(f).collect()
}

/// Smallest index satisfying `pred`; the same answer under either strategy.
pub fn find_first<F>(exec: Exec, range: Range<u64>, pred: F) -> Option<u64>
where
    F: Fn(u64) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return range.into_par_iter().find_first(|&i| pred(i));
    }
    let _ = exec;
    range.into_iter().find(|&i| pred(i))
}

/// Fixed-order pairwise sum, reproducible regardless of how `values` was
/// produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        len => {
            let (a, b) = values.split_at(len / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Configures the global pool size. Returns false if the pool was already
/// initialized or parallelism is compiled out.
pub fn set_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree() {
        let f = |i: u64| (i as i128 * 7919) % 101 - 50;
        assert_eq!(sum_i128(Exec::Sequential, 0..10_000, f), sum_i128(Exec::Parallel, 0..10_000, f));
        let a: Vec<u64> = map_collect(Exec::Parallel, 0..100, |i| i * i);
        assert_eq!(a, (0..100).map(|i| i * i).collect::<Vec<_>>());
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0]), 6.0);
    }
}
