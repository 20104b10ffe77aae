//! Measurement harness for the record-and-replay runtime: the synthetic
//! chain benchmark, numerical kernels, the analytic overhead model and
//! report formatting.

pub mod chain;
pub mod kernels;
pub mod model;
pub mod report;
pub mod runner;
pub mod work;

use thiserror::Error;

pub use chain::{ChainBench, ChainConfig};
pub use kernels::{Kernel, KernelKind};
pub use model::{ModelError, OverheadModel};
pub use report::{BenchmarkReport, Format, Mode, Row};
pub use runner::{kernel_rows, run_kernel, save_kernel_tdg};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Exec(#[from] tdg_runtime::ExecError),
    #[error(transparent)]
    Region(#[from] tdg_runtime::RegionError),
    #[error(transparent)]
    Pool(#[from] tdg_runtime::PoolError),
    #[error(transparent)]
    Save(#[from] tdg_runtime::SaveError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("static mode needs a graph file (--static-tdg)")]
    MissingStaticTdg,
    #[error(
        "{kernel}: {differing} values differ from the serial result; first at index \
         {first_index}: expected {expected:e}, got {got:e}"
    )]
    Mismatch {
        kernel: String,
        differing: usize,
        first_index: usize,
        expected: f64,
        got: f64,
    },
}

/// Worker count for measurements: the available cores, but at least 4.
pub fn default_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .max(4)
}

/// True when the environment asks for pinned threads.
pub fn pinning_requested() -> bool {
    let bind = std::env::var("OMP_PROC_BIND").unwrap_or_default();
    let bind = bind.trim().to_ascii_lowercase();
    matches!(
        bind.as_str(),
        "true" | "close" | "spread" | "master" | "primary"
    ) || std::env::var_os("GOMP_CPU_AFFINITY").is_some()
}
