//! Frame geometry and pixel formats.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelFormat {
    Rgb8,
    Gray8,
    /// Raw bytes with no pixel semantics.
    Opaque,
}

impl PixelFormat {
    /// Bytes per pixel, `None` for [`PixelFormat::Opaque`].
    pub const fn bytes_per_pixel(self) -> Option<usize> {
        match self {
            PixelFormat::Rgb8 => Some(3),
            PixelFormat::Gray8 => Some(1),
            PixelFormat::Opaque => None,
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            PixelFormat::Rgb8 => "rgb8",
            PixelFormat::Gray8 => "gray8",
            PixelFormat::Opaque => "opaque",
        }
    }
}

impl FromStr for PixelFormat {
    type Err = FrameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rgb8" => Ok(PixelFormat::Rgb8),
            "gray8" => Ok(PixelFormat::Gray8),
            "opaque" => Ok(PixelFormat::Opaque),
            _ => Err(FrameError::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame dimensions must be positive, got {width}x{height}")]
    ZeroDimension { width: u32, height: u32 },
    #[error("unknown pixel format `{0}`")]
    UnknownFormat(String),
    #[error("unknown resolution `{0}` (expected 720p, 1080p, 1440p or 2160p)")]
    UnknownResolution(String),
}

/// The four resolutions used by the local-transfer benchmark, in ascending order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Resolution {
    #[serde(rename = "720p")]
    P720,
    #[serde(rename = "1080p")]
    P1080,
    #[serde(rename = "1440p")]
    P1440,
    #[serde(rename = "2160p")]
    P2160,
}

impl Resolution {
    pub const ALL: [Resolution; 4] = [
        Resolution::P720,
        Resolution::P1080,
        Resolution::P1440,
        Resolution::P2160,
    ];

    pub const fn dimensions(self) -> (u32, u32) {
        match self {
            Resolution::P720 => (1280, 720),
            Resolution::P1080 => (1920, 1080),
            Resolution::P1440 => (2560, 1440),
            Resolution::P2160 => (3840, 2160),
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Resolution::P720 => "720p",
            Resolution::P1080 => "1080p",
            Resolution::P1440 => "1440p",
            Resolution::P2160 => "2160p",
        }
    }

    pub fn frame(self, format: PixelFormat) -> FrameSpec {
        let (width, height) = self.dimensions();
        FrameSpec {
            width,
            height,
            format,
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Resolution {
    type Err = FrameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Resolution::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| FrameError::UnknownResolution(s.to_string()))
    }
}

/// Geometry of one frame.
///
/// For [`PixelFormat::Opaque`] frames each `width x height` cell is a single
/// raw byte; the payload size is only enforced for pixel formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameSpec {
    pub width: u32,
    pub height: u32,
    pub format: PixelFormat,
}

impl FrameSpec {
    pub fn new(width: u32, height: u32, format: PixelFormat) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::ZeroDimension { width, height });
        }
        Ok(FrameSpec {
            width,
            height,
            format,
        })
    }

    pub const fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// `width * height * bytes_per_pixel`; opaque frames count one byte per cell.
    pub const fn payload_size(&self) -> usize {
        match self.format.bytes_per_pixel() {
            Some(bpp) => self.pixels() * bpp,
            None => self.pixels(),
        }
    }

    pub const fn is_valid(&self) -> bool {
        self.width > 0 && self.height > 0
    }
}
