use disparity_core::inference::ReplicateRunner;
use rayon::prelude::*;
use rayon::ThreadPool;

/// Runs replicates on a rayon pool. Results come back in index order.
#[derive(Debug, Default)]
pub struct RayonRunner {
    pool: Option<ThreadPool>,
}

impl RayonRunner {
    /// `None` uses the global pool.
    pub fn new(workers: Option<usize>) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = match workers {
            Some(n) => Some(rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build()?),
            None => None,
        };
        Ok(Self { pool })
    }
}

impl ReplicateRunner for RayonRunner {
    fn map<R, F>(&self, count: usize, task: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        let run = || (0..count).into_par_iter().map(&task).collect();
        match &self.pool {
            Some(p) => p.install(run),
            None => run(),
        }
    }
}
