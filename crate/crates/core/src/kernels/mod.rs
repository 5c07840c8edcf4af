//! Built-in kernels and their registered type names.

mod combiner;
mod grayscale;
mod passthrough;
mod sink;
mod source;

pub use combiner::Combiner;
pub use grayscale::Grayscale;
pub use passthrough::Passthrough;
pub use sink::{LatencyLog, LatencyRecord, LatencySink, DEFAULT_RECORD_LIMIT};
pub use source::{Fill, SourceParams, SyntheticFrameSource};

/// Type names accepted in deployment configs.
pub const BUILTIN_TYPES: [&str; 5] = [
    SyntheticFrameSource::TYPE,
    Passthrough::TYPE,
    Grayscale::TYPE,
    Combiner::TYPE,
    LatencySink::TYPE,
];
