use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clock::now_ns;
use crate::frame::{FrameSpec, PixelFormat, Resolution};
use crate::kernel::{Flow, Kernel, KernelFailure, PortSpec, StepIo};
use crate::message::Message;
use crate::params::{ParamError, Params};
use crate::payload::Payload;

/// How synthetic frames are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fill {
    Constant(u8),
    /// Byte at pixel `(x, y)` is `(x + y + seq) mod 256` in every channel.
    Gradient,
    /// ChaCha8 stream seeded once; successive frames continue the stream.
    Random(u64),
}

impl FromStr for Fill {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        match (kind.to_ascii_lowercase().as_str(), arg) {
            ("gradient", None) => Ok(Fill::Gradient),
            ("constant", Some(v)) => v
                .parse()
                .map(Fill::Constant)
                .map_err(|_| format!("constant fill needs a byte value, got `{v}`")),
            ("random", Some(v)) => v
                .parse()
                .map(Fill::Random)
                .map_err(|_| format!("random fill needs a u64 seed, got `{v}`")),
            _ => Err(format!(
                "unknown fill `{s}` (expected constant:<byte>, gradient or random:<seed>)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceParams {
    pub frame: FrameSpec,
    /// 0 emits as fast as the downstream accepts.
    pub fps: u32,
    pub frame_budget: Option<u64>,
    pub fill: Fill,
}

impl SourceParams {
    pub fn new(frame: FrameSpec) -> Self {
        SourceParams {
            frame,
            fps: 0,
            frame_budget: None,
            fill: Fill::Constant(0),
        }
    }

    pub fn budget(mut self, frames: u64) -> Self {
        self.frame_budget = Some(frames);
        self
    }

    pub fn fill(mut self, fill: Fill) -> Self {
        self.fill = fill;
        self
    }

    pub fn fps(mut self, fps: u32) -> Self {
        self.fps = fps;
        self
    }

    /// Keys: `resolution` (named) or `width` + `height`; `format`; `fps`;
    /// `frames`; `fill`.
    pub fn from_params(p: &Params) -> Result<Self, ParamError> {
        p.expect_only(&[
            "resolution",
            "width",
            "height",
            "format",
            "fps",
            "frames",
            "fill",
        ])?;
        let format = match p.str("format")? {
            Some(f) => f
                .parse::<PixelFormat>()
                .map_err(|e| ParamError::new("format", e.to_string()))?,
            None => PixelFormat::Rgb8,
        };
        let frame = match (p.str("resolution")?, p.u64("width")?, p.u64("height")?) {
            (Some(r), None, None) => r
                .parse::<Resolution>()
                .map_err(|e| ParamError::new("resolution", e.to_string()))?
                .frame(format),
            (None, Some(w), Some(h)) => {
                let dim = |key: &str, v: u64| {
                    u32::try_from(v).map_err(|_| ParamError::new(key, "too large"))
                };
                FrameSpec::new(dim("width", w)?, dim("height", h)?, format)
                    .map_err(|e| ParamError::new("width", e.to_string()))?
            }
            (None, None, None) => Resolution::P720.frame(format),
            _ => {
                return Err(ParamError::new(
                    "resolution",
                    "give either `resolution` or both `width` and `height`",
                ))
            }
        };
        let fps = match p.u64("fps")? {
            Some(v) => u32::try_from(v).map_err(|_| ParamError::new("fps", "too large"))?,
            None => 0,
        };
        let frame_budget = p.u64("frames")?;
        if frame_budget == Some(0) {
            return Err(ParamError::new("frames", "budget must be at least 1"));
        }
        let fill = match p.get("fill") {
            None => Fill::Constant(0),
            Some(crate::params::ParamValue::Int(v)) => u8::try_from(*v)
                .map(Fill::Constant)
                .map_err(|_| ParamError::new("fill", "constant fill must be 0..=255"))?,
            Some(v) => v
                .to_string()
                .parse()
                .map_err(|e: String| ParamError::new("fill", e))?,
        };
        Ok(SourceParams {
            frame,
            fps,
            frame_budget,
            fill,
        })
    }
}

/// Emits synthetic frames on port `out`.
pub struct SyntheticFrameSource {
    params: SourceParams,
    emitted: u64,
    rng: Option<ChaCha8Rng>,
    next_deadline: Option<Instant>,
}

impl SyntheticFrameSource {
    pub const TYPE: &'static str = "SyntheticFrameSource";

    pub fn new(params: SourceParams) -> Self {
        let rng = match params.fill {
            Fill::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        SyntheticFrameSource {
            params,
            emitted: 0,
            rng,
            next_deadline: None,
        }
    }

    pub fn ports() -> Vec<PortSpec> {
        vec![PortSpec::output("out")]
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    pub fn is_exhausted(&self) -> bool {
        self.params.frame_budget.is_some_and(|b| self.emitted >= b)
    }

    /// Produces the next frame without pacing.
    pub fn next_frame(&mut self) -> Message {
        let frame = self.params.frame;
        let len = frame.payload_size();
        let seq = self.emitted;
        let payload = match self.params.fill {
            Fill::Constant(v) => Payload::filled(len, v).expect("positive frame size"),
            Fill::Gradient => Payload::from_vec(gradient(frame, seq)),
            Fill::Random(_) => {
                let mut bytes = vec![0u8; len];
                self.rng.as_mut().expect("seeded").fill_bytes(&mut bytes);
                Payload::from_vec(bytes)
            }
        };
        self.emitted += 1;
        Message::new(frame, payload, seq, now_ns()).expect("payload sized from frame")
    }

    fn pace(&mut self) {
        if self.params.fps == 0 {
            return;
        }
        let period = Duration::from_secs_f64(1.0 / self.params.fps as f64);
        let now = Instant::now();
        let base = match self.next_deadline {
            Some(d) if d > now => {
                thread::sleep(d - now);
                d
            }
            // Late or first frame: the schedule restarts from now.
            _ => now,
        };
        self.next_deadline = Some(base + period);
    }
}

fn gradient(frame: FrameSpec, seq: u64) -> Vec<u8> {
    let bpp = frame.format.bytes_per_pixel().unwrap_or(1);
    let mut out = Vec::with_capacity(frame.payload_size());
    for y in 0..frame.height as u64 {
        for x in 0..frame.width as u64 {
            let v = (x + y + seq) as u8;
            out.extend(std::iter::repeat_n(v, bpp));
        }
    }
    out
}

impl Kernel for SyntheticFrameSource {
    fn type_name(&self) -> &'static str {
        Self::TYPE
    }

    fn ports(&self) -> Vec<PortSpec> {
        Self::ports()
    }

    fn step(&mut self, io: &mut StepIo) -> Result<Flow, KernelFailure> {
        if self.is_exhausted() {
            return Ok(Flow::Done);
        }
        self.pace();
        let m = self.next_frame();
        io.emit("out", m)?;
        Ok(if self.is_exhausted() {
            Flow::Done
        } else {
            Flow::Continue
        })
    }
}
