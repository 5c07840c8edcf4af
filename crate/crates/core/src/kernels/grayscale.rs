use crate::frame::{FrameSpec, PixelFormat};
use crate::kernel::{Flow, Kernel, KernelFailure, PortSpec, StepIo};
use crate::message::Message;
use crate::payload::Payload;

/// RGB8 → GRAY8 by integer channel mean, `floor((r + g + b) / 3)`.
#[derive(Debug, Default)]
pub struct Grayscale;

impl Grayscale {
    pub const TYPE: &'static str = "Grayscale";

    pub fn ports() -> Vec<PortSpec> {
        vec![PortSpec::input("in"), PortSpec::output("out")]
    }

    pub fn convert(m: &Message) -> Result<Message, KernelFailure> {
        if m.frame.format != PixelFormat::Rgb8 {
            return Err(KernelFailure(format!(
                "FormatMismatch: expected rgb8 input, got {}",
                m.frame.format.as_str()
            )));
        }
        let gray: Vec<u8> = m
            .payload
            .chunks_exact(3)
            .map(|px| ((px[0] as u16 + px[1] as u16 + px[2] as u16) / 3) as u8)
            .collect();
        let frame = FrameSpec {
            format: PixelFormat::Gray8,
            ..m.frame
        };
        m.with_payload(frame, Payload::from_vec(gray))
            .map_err(|e| KernelFailure(e.to_string()))
    }
}

impl Kernel for Grayscale {
    fn type_name(&self) -> &'static str {
        Self::TYPE
    }

    fn ports(&self) -> Vec<PortSpec> {
        Self::ports()
    }

    fn step(&mut self, io: &mut StepIo) -> Result<Flow, KernelFailure> {
        if let Some(m) = io.take("in") {
            let out = Self::convert(&m)?;
            io.emit("out", out)?;
        }
        Ok(Flow::Continue)
    }
}
