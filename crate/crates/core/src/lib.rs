//! Stream-processing runtime for split XR pipelines.
//!
//! Kernels run on their own threads and exchange [`Message`]s over bounded
//! [`channel`]s. Payloads are reference counted, so a local hop hands over a
//! pointer instead of copying pixels. Edges that cross between the client
//! and the server go over a TCP [`remote`] link with a fixed binary header
//! and an optional run-length codec.

pub mod bench;
pub mod channel;
pub mod clock;
pub mod frame;
pub mod kernel;
pub mod kernels;
pub mod message;
pub mod params;
pub mod payload;
pub mod pipeline;
pub mod remote;
pub mod sched;

pub use channel::{
    channel, channel_with, ChannelControl, ChannelError, ChannelOptions, OverflowPolicy, Receiver,
    SendResult, Sender, SyncMode, TransferMode, DEFAULT_CAPACITY,
};
pub use clock::now_ns;
pub use frame::{FrameError, FrameSpec, PixelFormat, Resolution};
pub use kernel::{
    Direction, Flow, Kernel, KernelCounters, KernelError, KernelFailure, KernelInstance, PortSpec,
    RunControl, RunEnd, StepIo, StepOutcome,
};
pub use message::{make_frame, CombineTag, Message, MessageError};
pub use params::{ParamError, ParamValue, Params};
pub use payload::{total_bytes_copied, AllocId, Payload, PayloadError};
pub use pipeline::{
    instantiate, parse_config, validate_config, ErrorCode, KernelRegistry, PipelineConfig,
    PipelineError, Role, RunLimit, RunReport, ValidationError,
};
pub use remote::{CodecId, LinkError, WireError, WireHeader};
