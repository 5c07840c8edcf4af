//! Deployment configs, validation and the multi-threaded runtime.

mod config;
mod registry;
mod report;
mod runtime;
mod validate;

pub use config::{
    parse_config, ConfigError, EdgeDecl, EdgeKind, Endpoint, KernelDecl, PipelineConfig, Placement,
    Transport,
};
pub use registry::{KernelFactory, KernelRegistry};
pub use report::{KernelReport, LinkDirection, LinkReport, RunReport, SinkReport};
pub use runtime::{
    instantiate, prepare, PipelineError, PreparedPipeline, Role, RunLimit, RunningPipeline,
    RuntimeOptions,
};
pub use validate::{validate_config, ErrorCode, ValidationError};
