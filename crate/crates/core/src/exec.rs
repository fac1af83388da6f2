//! Data-parallel execution policy.
//!
//! Work items (windows in a batch, sweep cells, ablation seeds) are mapped
//! independently and collected back in input order, so every reduction that
//! follows is performed sequentially in a fixed order. Results are therefore
//! bitwise identical between [`Execution::Sequential`] and
//! [`Execution::Parallel`] and independent of the thread count.
//!
//! Parallel execution requires the `parallel` cargo feature (on by default);
//! without it `Parallel` quietly runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when this policy actually runs on the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Maps `f` over `items`, returning results in input order.
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
}
