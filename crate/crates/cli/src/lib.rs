//! The `waverep` pipeline as library calls, so tests can drive each command
//! without spawning a process.

pub mod build;
pub mod eval;
pub mod inspect;
pub mod run_info;
pub mod source;
pub mod train;

use anyhow::{Context, Result};

/// Worker pool capped by `WAVEREP_THREADS` when set to a positive integer.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("WAVEREP_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        builder = builder.num_threads(n);
    }
    builder.build().context("starting worker threads")
}
