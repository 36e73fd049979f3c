//! Execution policy for data-parallel loops.
//!
//! With the `parallel` feature (on by default) [`Execution::Parallel`] runs on
//! the rayon global pool. Without it every policy runs sequentially, so the
//! same call sites build on targets where threads are unavailable.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// True when this policy actually fans out to worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Sums `f(i)` over `0..n`. Chunked so that parallel and sequential runs
    /// add in the same order and produce bit-identical results.
    pub fn sum_range<F>(self, n: usize, chunk: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        let chunk = chunk.max(1);
        let chunks = n.div_ceil(chunk);
        let partial = self.map_range(chunks, |c| {
            let lo = c * chunk;
            let hi = (lo + chunk).min(n);
            (lo..hi).map(&f).sum::<f64>()
        });
        partial.into_iter().sum()
    }

    /// Runs two closures, concurrently when parallel.
    pub fn join<A, B, RA, RB>(self, a: A, b: B) -> (RA, RB)
    where
        A: FnOnce() -> RA + Send,
        B: FnOnce() -> RB + Send,
        RA: Send,
        RB: Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return rayon::join(a, b);
        }
        (a(), b())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        let seq = Execution::Sequential.map(&xs, |x| x * x);
        let par = Execution::Parallel.map(&xs, |x| x * x);
        assert_eq!(seq, par);
    }

    #[test]
    fn chunked_sum_is_bit_identical() {
        let f = |i: usize| ((i as f64) * 0.1).sin();
        let a = Execution::Sequential.sum_range(100_003, 997, f);
        let b = Execution::Parallel.sum_range(100_003, 997, f);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn join_returns_both() {
        let (a, b) = Execution::default().join(|| 1, || "x");
        assert_eq!((a, b), (1, "x"));
    }
}
