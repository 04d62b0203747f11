//! Worker pool sizing. The thread count only affects speed: every parallel
//! stage collects results in a fixed order.

use crate::error::{Result, SkgpError};

/// Environment variable capping the worker count when no explicit count is
/// given.
pub const THREADS_ENV: &str = "SKGP_THREADS";

/// Explicit count, else `SKGP_THREADS`, else the available parallelism.
pub fn resolve_threads(explicit: Option<usize>) -> Result<usize> {
    if let Some(n) = explicit {
        return check(n, "threads");
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n = v.trim().parse::<usize>().map_err(|e| SkgpError::Config {
                field: THREADS_ENV.into(),
                message: format!("{v:?}: {e}"),
            })?;
            check(n, THREADS_ENV)
        }
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn check(n: usize, field: &str) -> Result<usize> {
    if n == 0 {
        return Err(SkgpError::Config {
            field: field.into(),
            message: "must be >= 1".into(),
        });
    }
    Ok(n)
}

pub fn build_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SkgpError::Config {
            field: "threads".into(),
            message: e.to_string(),
        })
}

/// Runs `f` inside a pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    Ok(build_pool(threads)?.install(f))
}
