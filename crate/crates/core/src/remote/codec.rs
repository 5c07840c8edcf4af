//! Payload codecs.
//!
//! RLE stream layout: a sequence of `(count, value)` byte pairs with
//! `count` in `1..=255`. Runs longer than 255 are split.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodecId {
    #[default]
    Raw,
    Rle,
}

impl CodecId {
    pub const fn to_byte(self) -> u8 {
        match self {
            CodecId::Raw => 0,
            CodecId::Rle => 1,
        }
    }

    pub const fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(CodecId::Raw),
            1 => Some(CodecId::Rle),
            _ => None,
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            CodecId::Raw => "raw",
            CodecId::Rle => "rle",
        }
    }

    pub fn encode(self, data: &[u8]) -> Vec<u8> {
        match self {
            CodecId::Raw => data.to_vec(),
            CodecId::Rle => rle_compress(data),
        }
    }

    pub fn decode(self, data: &[u8]) -> Result<Vec<u8>, CodecError> {
        match self {
            CodecId::Raw => Ok(data.to_vec()),
            CodecId::Rle => rle_decompress(data),
        }
    }
}

impl fmt::Display for CodecId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CodecId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "raw" => Ok(CodecId::Raw),
            "rle" => Ok(CodecId::Rle),
            _ => Err(format!("unknown codec `{s}` (expected raw or rle)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("malformed RLE stream: {0}")]
    MalformedStream(&'static str),
}

pub fn rle_compress(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut rest = data;
    while let Some(&value) = rest.first() {
        let limit = rest.len().min(u8::MAX as usize);
        let run = rest[..limit]
            .iter()
            .position(|&b| b != value)
            .unwrap_or(limit);
        out.push(run as u8);
        out.push(value);
        rest = &rest[run..];
    }
    out
}

/// Decoded length of an RLE stream, validating it without allocating.
pub fn rle_decoded_len(data: &[u8]) -> Result<usize, CodecError> {
    if !data.len().is_multiple_of(2) {
        return Err(CodecError::MalformedStream("odd length"));
    }
    data.chunks_exact(2)
        .try_fold(0usize, |acc, pair| match pair[0] {
            0 => Err(CodecError::MalformedStream("zero run count")),
            n => Ok(acc + n as usize),
        })
}

pub fn rle_decompress(data: &[u8]) -> Result<Vec<u8>, CodecError> {
    let len = rle_decoded_len(data)?;
    let mut out = Vec::with_capacity(len);
    for pair in data.chunks_exact(2) {
        out.resize(out.len() + pair[0] as usize, pair[1]);
    }
    Ok(out)
}
