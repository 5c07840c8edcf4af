use thiserror::Error;

use crate::clock::now_ns;
use crate::frame::{FrameError, FrameSpec, PixelFormat};
use crate::payload::{AllocId, Payload};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MessageError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("payload is {actual} bytes but the {width}x{height} frame needs {expected}")]
    SizeMismatch {
        width: u32,
        height: u32,
        expected: usize,
        actual: usize,
    },
}

/// Side-input metadata attached by a combining kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CombineTag {
    /// Sequence number of the side input consumed at firing time, if any.
    pub partner_seq: Option<u64>,
}

impl CombineTag {
    pub fn partner_present(&self) -> bool {
        self.partner_seq.is_some()
    }
}

/// One frame travelling through the pipeline.
#[derive(Debug, Clone)]
pub struct Message {
    pub seq: u64,
    /// Stamped once by the originating kernel and carried end to end.
    pub created_ns: u64,
    /// Stamped by each local channel send; host-local.
    pub sent_ns: u64,
    pub frame: FrameSpec,
    pub payload: Payload,
    pub combine: Option<CombineTag>,
}

impl Message {
    pub fn new(
        frame: FrameSpec,
        payload: Payload,
        seq: u64,
        created_ns: u64,
    ) -> Result<Self, MessageError> {
        if !frame.is_valid() {
            return Err(FrameError::ZeroDimension {
                width: frame.width,
                height: frame.height,
            }
            .into());
        }
        if frame.format != PixelFormat::Opaque && payload.len() != frame.payload_size() {
            return Err(MessageError::SizeMismatch {
                width: frame.width,
                height: frame.height,
                expected: frame.payload_size(),
                actual: payload.len(),
            });
        }
        Ok(Message {
            seq,
            created_ns,
            sent_ns: created_ns,
            frame,
            payload,
            combine: None,
        })
    }

    pub fn alloc_id(&self) -> AllocId {
        self.payload.alloc_id()
    }

    /// Same payload handle, new frame description. Used by kernels that
    /// forward a payload under a different sequence or tag.
    pub fn with_payload(&self, frame: FrameSpec, payload: Payload) -> Result<Self, MessageError> {
        let mut m = Message::new(frame, payload, self.seq, self.created_ns)?;
        m.sent_ns = self.sent_ns;
        Ok(m)
    }
}

/// Builds a synthetic frame with every payload byte set to `fill`.
pub fn make_frame(spec: FrameSpec, seq: u64, fill: u8) -> Result<Message, MessageError> {
    let spec = FrameSpec::new(spec.width, spec.height, spec.format)?;
    let payload = Payload::filled(spec.payload_size(), fill)
        .expect("positive dimensions give a positive payload size");
    Message::new(spec, payload, seq, now_ns())
}
