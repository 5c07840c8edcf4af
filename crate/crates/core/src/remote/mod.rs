//! Remote port bindings: wire framing, payload codecs, and TCP links.

pub mod codec;
pub mod link;
pub mod serialize;
pub mod wire;

pub use codec::{rle_compress, rle_decoded_len, rle_decompress, CodecError, CodecId};
pub use link::{
    link_establish, loopback_for, parse_address, LinkConfig, LinkError, LinkListener, LinkReceiver,
    LinkRole, LinkSender, LinkShutdown, LinkState, RemoteLink,
};
pub use serialize::{decode_data, deserialize_message, serialize_message};
pub use wire::{
    decode_header, encode_header, MsgType, WireError, WireHeader, HEADER_LEN, MAGIC,
    PROTOCOL_VERSION,
};
