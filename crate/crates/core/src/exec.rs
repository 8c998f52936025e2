//! Sequential or rayon-backed evaluation of independent work items.
//!
//! Results are always collected in input order, so reductions done by the
//! caller see the same sequence of values whichever path ran.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
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
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// `items.map(f)` in input order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// `f` applied to each half-open block of `0..len`, in block order.
    pub fn map_blocks<R, F>(self, len: usize, block: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize, usize) -> R + Sync + Send,
    {
        let block = block.max(1);
        let ranges: Vec<(usize, usize)> = (0..len)
            .step_by(block)
            .map(|s| (s, (s + block).min(len)))
            .collect();
        self.map(&ranges, |&(s, e)| f(s, e))
    }
}
