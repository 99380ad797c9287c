//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) [`ExecPolicy::Parallel`] runs on
//! the rayon pool; without it every policy executes sequentially. Results never
//! depend on the policy: each helper applies a pure per-item function and
//! collects in input order.

use serde::{Deserialize, Serialize};

use crate::dense::RowMatrix;

/// Rows below this count are not split further across rayon tasks.
#[cfg(feature = "parallel")]
const MIN_ROWS_PER_TASK: usize = 128;

/// How data-parallel loops are executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecPolicy {
    Sequential,
    #[default]
    Parallel,
}

impl ExecPolicy {
    /// True when this policy actually dispatches to rayon.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecPolicy::Parallel
    }
}

/// Applies `f` to every row of `m`, collecting one result per row.
pub fn map_rows_mut<R, F>(m: &mut RowMatrix, policy: ExecPolicy, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize, &mut [f64]) -> R + Sync + Send,
{
    let ncols = m.ncols();
    let nrows = m.nrows();
    if ncols == 0 {
        return (0..nrows).map(|i| f(i, &mut [])).collect();
    }
    #[cfg(feature = "parallel")]
    if policy.is_parallel() {
        use rayon::prelude::*;
        return m
            .data_mut()
            .par_chunks_mut(ncols)
            .with_min_len(MIN_ROWS_PER_TASK)
            .enumerate()
            .map(|(i, row)| f(i, row))
            .collect();
    }
    let _ = policy;
    m.data_mut().chunks_mut(ncols).enumerate().map(|(i, row)| f(i, row)).collect()
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], policy: ExecPolicy, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if policy.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = policy;
    items.iter().map(f).collect()
}
