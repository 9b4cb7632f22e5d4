//! Worker pool sizing.

use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::error::{CliError, Result};

pub const THREADS_VAR: &str = "SLRC_THREADS";

/// Thread count: `SLRC_THREADS` when set, otherwise the available
/// parallelism.
pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => parse_threads(&v),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn parse_threads(v: &str) -> Result<usize> {
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(CliError::validation(format!(
            "{THREADS_VAR} must be a positive integer, got `{v}`"
        ))),
    }
}

pub fn worker_pool() -> Result<ThreadPool> {
    let threads = thread_count()?;
    ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::validation(format!("cannot start {threads} worker threads: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_positive_counts_only() {
        assert_eq!(parse_threads("3").unwrap(), 3);
        assert_eq!(parse_threads(" 1 ").unwrap(), 1);
        assert!(parse_threads("0").is_err());
        assert!(parse_threads("many").is_err());
    }
}
