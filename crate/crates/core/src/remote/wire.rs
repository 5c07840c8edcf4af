//! Fixed 36-byte frame header, big-endian.
//!
//! ```text
//!  0      4   5   6   7   8              16             24      28      32      36
//!  +------+---+---+---+---+--------------+--------------+-------+-------+-------+
//!  | XRSP |ver|typ|cdc|fmt|     seq      |  created_ns  | width |height |paylen |
//!  +------+---+---+---+---+--------------+--------------+-------+-------+-------+
//! ```

use thiserror::Error;

use super::codec::{CodecError, CodecId};
use crate::frame::PixelFormat;

pub const MAGIC: [u8; 4] = *b"XRSP";
pub const PROTOCOL_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MsgType {
    Data,
    Hello,
    Bye,
}

impl MsgType {
    pub const fn to_byte(self) -> u8 {
        match self {
            MsgType::Data => 0,
            MsgType::Hello => 1,
            MsgType::Bye => 2,
        }
    }

    pub const fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(MsgType::Data),
            1 => Some(MsgType::Hello),
            2 => Some(MsgType::Bye),
            _ => None,
        }
    }
}

pub const fn format_to_byte(f: PixelFormat) -> u8 {
    match f {
        PixelFormat::Rgb8 => 0,
        PixelFormat::Gray8 => 1,
        PixelFormat::Opaque => 255,
    }
}

pub const fn format_from_byte(b: u8) -> Option<PixelFormat> {
    match b {
        0 => Some(PixelFormat::Rgb8),
        1 => Some(PixelFormat::Gray8),
        255 => Some(PixelFormat::Opaque),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("need {HEADER_LEN} header bytes, got {0}")]
    ShortHeader(usize),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("expected a DATA frame, got {0:?}")]
    NotData(MsgType),
    #[error("payload truncated: header declares {declared} bytes, {available} present")]
    Truncated { declared: usize, available: usize },
    #[error("payload decodes to {actual} bytes, frame needs {expected}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("encoded payload of {0} bytes exceeds the 32-bit length field")]
    PayloadTooLarge(usize),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WireHeader {
    pub version: u8,
    pub msg_type: MsgType,
    pub codec: CodecId,
    pub pixel_format: PixelFormat,
    pub seq: u64,
    pub created_ns: u64,
    pub width: u32,
    pub height: u32,
    pub payload_len: u32,
}

impl WireHeader {
    /// A HELLO/BYE control header: all numeric fields zero, opaque format.
    pub fn control(msg_type: MsgType, codec: CodecId) -> Self {
        WireHeader {
            version: PROTOCOL_VERSION,
            msg_type,
            codec,
            pixel_format: PixelFormat::Opaque,
            seq: 0,
            created_ns: 0,
            width: 0,
            height: 0,
            payload_len: 0,
        }
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4] = self.version;
        b[5] = self.msg_type.to_byte();
        b[6] = self.codec.to_byte();
        b[7] = format_to_byte(self.pixel_format);
        b[8..16].copy_from_slice(&self.seq.to_be_bytes());
        b[16..24].copy_from_slice(&self.created_ns.to_be_bytes());
        b[24..28].copy_from_slice(&self.width.to_be_bytes());
        b[28..32].copy_from_slice(&self.height.to_be_bytes());
        b[32..36].copy_from_slice(&self.payload_len.to_be_bytes());
        b
    }

    pub fn decode(b: &[u8]) -> Result<Self, WireError> {
        let b: &[u8; HEADER_LEN] = b
            .get(..HEADER_LEN)
            .and_then(|s| s.try_into().ok())
            .ok_or(WireError::ShortHeader(b.len()))?;
        let magic: [u8; 4] = b[0..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(WireError::BadMagic(magic));
        }
        if b[4] != PROTOCOL_VERSION {
            return Err(WireError::UnsupportedVersion(b[4]));
        }
        let msg_type = MsgType::from_byte(b[5])
            .ok_or_else(|| WireError::MalformedHeader(format!("unknown msg_type {}", b[5])))?;
        let codec = CodecId::from_byte(b[6])
            .ok_or_else(|| WireError::MalformedHeader(format!("unknown codec {}", b[6])))?;
        let pixel_format = format_from_byte(b[7])
            .ok_or_else(|| WireError::MalformedHeader(format!("unknown pixel_format {}", b[7])))?;
        let u64_at = |i: usize| u64::from_be_bytes(b[i..i + 8].try_into().expect("8 bytes"));
        let u32_at = |i: usize| u32::from_be_bytes(b[i..i + 4].try_into().expect("4 bytes"));
        Ok(WireHeader {
            version: b[4],
            msg_type,
            codec,
            pixel_format,
            seq: u64_at(8),
            created_ns: u64_at(16),
            width: u32_at(24),
            height: u32_at(28),
            payload_len: u32_at(32),
        })
    }
}

pub fn encode_header(h: &WireHeader) -> [u8; HEADER_LEN] {
    h.encode()
}

pub fn decode_header(b: &[u8]) -> Result<WireHeader, WireError> {
    WireHeader::decode(b)
}
