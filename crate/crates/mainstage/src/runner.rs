use mainstage_core::model::GradientRunner;
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

/// Environment variable capping worker threads; 0 or unset means one per core.
pub const THREADS_ENV: &str = "MAINSTAGE_THREADS";

/// Runs jobs on a rayon pool. Results come back in job order, so reductions
/// over them are independent of scheduling.
pub struct Parallel {
    pool: ThreadPool,
}

impl Parallel {
    pub fn new(threads: usize) -> Self {
        let pool = ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool construction");
        Parallel { pool }
    }

    pub fn from_env() -> Self {
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .unwrap_or(0);
        Self::new(threads)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl GradientRunner for Parallel {
    fn map<T: Send>(&self, n: usize, job: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
        self.pool
            .install(|| (0..n).into_par_iter().map(job).collect())
    }
}
