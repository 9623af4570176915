//! Batch experiments over `cusp-spectral`: config parsing, the experiment
//! runners, and the run directory with its manifest.

// Row loops index parallel columns; `!(x > y)` deliberately rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod run;

/// Worker count from `--threads`, then `CUSPBRANCH_THREADS`, then the
/// hardware.
pub fn thread_count(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var("CUSPBRANCH_THREADS").ok()?.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Sizes the global pool; one thread selects the sequential path.
pub fn configure_threads(n: usize) {
    cusp_spectral::par::set_sequential(n <= 1);
    #[cfg(feature = "parallel")]
    if n > 1 {
        // A second call fails harmlessly once the pool exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
