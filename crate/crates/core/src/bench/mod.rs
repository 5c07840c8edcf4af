//! Latency measurement harness for local and remote transfers.

mod local;
mod remote;
mod stats;
mod table;

use thiserror::Error;

use crate::channel::ChannelError;
use crate::kernel::KernelError;
use crate::remote::LinkError;

pub use local::{bench_local, bench_local_cell, kind_label, parse_kind, WARMUP_FRAMES};
pub use remote::{
    bench_remote, bench_remote_cell, kind_label as remote_kind_label, RemoteBenchOptions,
};
pub use stats::{percentile, summarize, LatencyStats};
pub use table::{render_table, BenchCell, BenchTable, TableFormat, CSV_HEADER};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no samples to summarize")]
    EmptyInput,
    #[error("expected {expected} frames at the sink, got {got}")]
    Incomplete { expected: u64, got: u64 },
    #[error("kernel: {0}")]
    Kernel(String),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

impl From<KernelError> for BenchError {
    fn from(e: KernelError) -> Self {
        BenchError::Kernel(e.to_string())
    }
}
