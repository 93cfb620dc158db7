//! Execution policy for the data-parallel inner loops (row scoring, embedding
//! batches, binning).
//!
//! With the `parallel` feature the loops run on rayon; without it every policy
//! degrades to a plain sequential loop. Results are collected in input order
//! in both cases, so outputs never depend on the policy.

use std::num::NonZeroUsize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Parallelism {
    /// rayon's global pool (or sequential without the `parallel` feature).
    #[default]
    Auto,
    Sequential,
    /// A dedicated pool with exactly this many workers.
    Threads(NonZeroUsize),
}

impl Parallelism {
    /// Policy for a worker count; 0 means [`Parallelism::Auto`], 1 means sequential.
    pub fn workers(n: usize) -> Self {
        match n {
            0 => Parallelism::Auto,
            1 => Parallelism::Sequential,
            n => Parallelism::Threads(NonZeroUsize::new(n).unwrap()),
        }
    }

    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && !matches!(self, Parallelism::Sequential)
    }

    /// `f(0), f(1), ..., f(n - 1)` in index order.
    pub fn map_range<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            match self {
                Parallelism::Sequential => {}
                Parallelism::Auto => {
                    return (0..n).into_par_iter().with_min_len(MIN_LEN).map(f).collect();
                }
                Parallelism::Threads(t) => {
                    return self.install(t.get(), || {
                        (0..n).into_par_iter().with_min_len(MIN_LEN).map(&f).collect()
                    });
                }
            }
        }
        (0..n).map(f).collect()
    }

    /// Maps every item, preserving order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        self.map_range(items.len(), |i| f(&items[i]))
    }

    #[cfg(feature = "parallel")]
    fn install<R: Send>(&self, threads: usize, op: impl FnOnce() -> R + Send) -> R {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(op),
            Err(err) => {
                log::warn!("could not build a {threads}-thread pool ({err}); using the global pool");
                op()
            }
        }
    }
}

#[cfg(feature = "parallel")]
const MIN_LEN: usize = 64;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_under_every_policy() {
        let expected: Vec<usize> = (0..1000).map(|i| i * i).collect();
        for p in [
            Parallelism::Auto,
            Parallelism::Sequential,
            Parallelism::workers(4),
        ] {
            assert_eq!(p.map_range(1000, |i| i * i), expected);
        }
    }

    #[test]
    fn worker_counts() {
        assert_eq!(Parallelism::workers(0), Parallelism::Auto);
        assert_eq!(Parallelism::workers(1), Parallelism::Sequential);
        assert!(!Parallelism::Sequential.is_parallel());
    }
}
