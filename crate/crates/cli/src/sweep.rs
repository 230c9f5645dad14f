use std::fmt::Debug;

use rayon::prelude::*;

use crate::CliError;

/// Evaluates `f` on every grid point with `workers` threads. Results come
/// back in grid order whatever the worker count; the first failure stops
/// the sweep and is reported with the offending point.
pub fn sweep_runner<P, T, F>(grid: &[P], workers: usize, f: F) -> Result<Vec<T>, CliError>
where
    P: Debug + Sync,
    T: Send,
    F: Fn(&P) -> Result<T, CliError> + Sync,
{
    if grid.is_empty() {
        return Err(CliError::Validation("sweep grid is empty".into()));
    }
    if workers == 0 {
        return Err(CliError::Validation("workers must be >= 1".into()));
    }
    let label = |i: usize, e: CliError| e.context(format!("sweep point {i} {:?}", grid[i]));
    if workers == 1 {
        return grid
            .iter()
            .enumerate()
            .map(|(i, p)| f(p).map_err(|e| label(i, e)))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Validation(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(i, p)| f(p).map_err(|e| label(i, e)))
            .collect()
    })
}
