//! Thread-pool batch evaluation.

use aopt_core::parallel::BatchEvaluator;
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::error::{CliError, Result};

/// Evaluates batches on a dedicated pool of `jobs` threads. Results keep the
/// input order, so callers see the same values for every pool size.
pub struct PoolEvaluator {
    pool: ThreadPool,
    jobs: usize,
}

impl PoolEvaluator {
    pub fn new(jobs: usize) -> Result<Self> {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        let pool = ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {jobs} worker threads: {e}")))?;
        Ok(Self { pool, jobs })
    }
}

impl BatchEvaluator for PoolEvaluator {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        self.pool.install(|| items.par_iter().map(&f).collect())
    }

    fn width(&self) -> usize {
        self.jobs
    }
}
