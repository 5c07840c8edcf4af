//! Message ⇄ bytes: `header ++ codec(payload)`.
//!
//! `sent_ns` and combiner tags are host-local and not transmitted.

use super::codec::{rle_decoded_len, CodecId};
use super::wire::{MsgType, WireError, WireHeader, HEADER_LEN, PROTOCOL_VERSION};
use crate::frame::{FrameSpec, PixelFormat};
use crate::message::Message;
use crate::payload::Payload;

pub fn data_header(
    m: &Message,
    codec: CodecId,
    payload_len: usize,
) -> Result<WireHeader, WireError> {
    let payload_len =
        u32::try_from(payload_len).map_err(|_| WireError::PayloadTooLarge(payload_len))?;
    Ok(WireHeader {
        version: PROTOCOL_VERSION,
        msg_type: MsgType::Data,
        codec,
        pixel_format: m.frame.format,
        seq: m.seq,
        created_ns: m.created_ns,
        width: m.frame.width,
        height: m.frame.height,
        payload_len,
    })
}

pub fn serialize_message(m: &Message, codec: CodecId) -> Result<Vec<u8>, WireError> {
    let body = match codec {
        CodecId::Raw => None,
        CodecId::Rle => Some(codec.encode(&m.payload)),
    };
    let body: &[u8] = body.as_deref().unwrap_or(&m.payload);
    let header = data_header(m, codec, body.len())?;
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(&header.encode());
    out.extend_from_slice(body);
    Ok(out)
}

pub fn deserialize_message(b: &[u8]) -> Result<Message, WireError> {
    let header = WireHeader::decode(b)?;
    let declared = header.payload_len as usize;
    let body = &b[HEADER_LEN..];
    if body.len() < declared {
        return Err(WireError::Truncated {
            declared,
            available: body.len(),
        });
    }
    decode_data(&header, body[..declared].to_vec())
}

/// Builds a message from a DATA header and its encoded payload bytes.
/// Takes ownership of `body` so a raw payload is adopted without copying.
pub fn decode_data(header: &WireHeader, body: Vec<u8>) -> Result<Message, WireError> {
    if header.msg_type != MsgType::Data {
        return Err(WireError::NotData(header.msg_type));
    }
    let frame = FrameSpec::new(header.width, header.height, header.pixel_format)
        .map_err(|e| WireError::MalformedHeader(e.to_string()))?;
    let decoded_len = match header.codec {
        CodecId::Raw => body.len(),
        CodecId::Rle => rle_decoded_len(&body)?,
    };
    if frame.format != PixelFormat::Opaque && decoded_len != frame.payload_size() {
        return Err(WireError::SizeMismatch {
            expected: frame.payload_size(),
            actual: decoded_len,
        });
    }
    if decoded_len == 0 {
        return Err(WireError::SizeMismatch {
            expected: frame.payload_size(),
            actual: 0,
        });
    }
    let bytes = match header.codec {
        CodecId::Raw => body,
        CodecId::Rle => header.codec.decode(&body)?,
    };
    let payload = Payload::from_vec(bytes);
    Message::new(frame, payload, header.seq, header.created_ns)
        .map_err(|e| WireError::MalformedHeader(e.to_string()))
}
