//! Fixtures shared by the criterion benches in `benches/`.

use xrpipe_core::kernels::{Fill, SourceParams, SyntheticFrameSource};
use xrpipe_core::{Message, PixelFormat, Resolution};

/// One RGB8 frame at `resolution`.
pub fn frame(resolution: Resolution, fill: Fill) -> Message {
    SyntheticFrameSource::new(SourceParams::new(resolution.frame(PixelFormat::Rgb8)).fill(fill))
        .next_frame()
}

/// Payload bytes of [`frame`].
pub fn frame_bytes(resolution: Resolution, fill: Fill) -> Vec<u8> {
    frame(resolution, fill).payload.as_slice().to_vec()
}
