//! Framed binary envelopes exchanged between the glass, the platform and
//! its services.
//!
//! Layout (all integers big-endian):
//!
//! ```text
//! offset  size  field
//!      0     2  magic        0xED 0x9E
//!      2     1  version      1
//!      3     1  msg_type
//!      4     2  reserved     0
//!      6     4  session_id
//!     10     4  seq
//!     14     4  payload_len
//!     18     n  payload
//!   18+n     4  crc32 (IEEE, reflected) over bytes [0, 18+n)
//! ```

mod msg_type;
pub mod payload;
mod stream;

pub use msg_type::{Channel, MsgType, Plane};
pub use payload::{FramePayload, PayloadError, WirePayload};
pub use stream::{write_envelope, FramedReader};

use bytes::{Buf, BufMut};
use thiserror::Error;

pub const MAGIC: [u8; 2] = [0xED, 0x9E];
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 18;
pub const TRAILER_LEN: usize = 4;
/// Largest payload a single envelope may carry (16 MiB).
pub const MAX_PAYLOAD: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub msg_type: MsgType,
    pub session_id: u32,
    pub seq: u32,
    pub payload: Vec<u8>,
}

impl Envelope {
    pub fn new(msg_type: MsgType, session_id: u32, seq: u32, payload: Vec<u8>) -> Self {
        Self {
            msg_type,
            session_id,
            seq,
            payload,
        }
    }

    /// Number of bytes this envelope occupies on the wire.
    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.payload.len() + TRAILER_LEN
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("bad magic: found {0:02X?}")]
    BadMagic(Vec<u8>),
    #[error("bad version: found {0}, expected 1")]
    BadVersion(u8),
    #[error("unknown msg_type {0}")]
    UnknownMsgType(u8),
    #[error("payload_len {0} exceeds the 16 MiB cap")]
    PayloadTooLarge(usize),
    #[error("crc32 mismatch: frame carries {found:#010X}, computed {computed:#010X}")]
    BadCrc { found: u32, computed: u32 },
    #[error("reserved field must be zero, found {0:#06X}")]
    BadReserved(u16),
}

/// Result of feeding bytes to [`decode_frame`].
#[derive(Debug, PartialEq, Eq)]
pub enum Decoded<'a> {
    Frame(Envelope, &'a [u8]),
    NeedMoreData,
}

pub fn encode_frame(envelope: &Envelope) -> Result<Vec<u8>, FrameError> {
    let len = envelope.payload.len();
    if len > MAX_PAYLOAD {
        return Err(FrameError::PayloadTooLarge(len));
    }
    let mut out = Vec::with_capacity(envelope.wire_len());
    out.put_slice(&MAGIC);
    out.put_u8(VERSION);
    out.put_u8(envelope.msg_type.code());
    out.put_u16(0);
    out.put_u32(envelope.session_id);
    out.put_u32(envelope.seq);
    out.put_u32(len as u32);
    out.put_slice(&envelope.payload);
    let crc = crc32fast::hash(&out);
    out.put_u32(crc);
    Ok(out)
}

/// Decodes exactly one frame from the front of `buffer`.
///
/// Header fields are validated as soon as their bytes are present, so a
/// garbage prefix is rejected without waiting for a full frame.
pub fn decode_frame(buffer: &[u8]) -> Result<Decoded<'_>, FrameError> {
    let magic_seen = buffer.len().min(2);
    if buffer[..magic_seen] != MAGIC[..magic_seen] {
        return Err(FrameError::BadMagic(buffer[..magic_seen].to_vec()));
    }
    if let Some(&version) = buffer.get(2) {
        if version != VERSION {
            return Err(FrameError::BadVersion(version));
        }
    }
    let msg_type = match buffer.get(3) {
        Some(&code) => MsgType::from_code(code).ok_or(FrameError::UnknownMsgType(code))?,
        None => return Ok(Decoded::NeedMoreData),
    };
    if buffer.len() < HEADER_LEN {
        return Ok(Decoded::NeedMoreData);
    }
    let mut header = &buffer[4..HEADER_LEN];
    let reserved = header.get_u16();
    let session_id = header.get_u32();
    let seq = header.get_u32();
    let len = header.get_u32() as usize;
    if len > MAX_PAYLOAD {
        return Err(FrameError::PayloadTooLarge(len));
    }
    let total = HEADER_LEN + len + TRAILER_LEN;
    if buffer.len() < total {
        return Ok(Decoded::NeedMoreData);
    }
    let body_end = HEADER_LEN + len;
    let computed = crc32fast::hash(&buffer[..body_end]);
    let found = (&buffer[body_end..total]).get_u32();
    if found != computed {
        return Err(FrameError::BadCrc { found, computed });
    }
    if reserved != 0 {
        return Err(FrameError::BadReserved(reserved));
    }
    let envelope = Envelope {
        msg_type,
        session_id,
        seq,
        payload: buffer[HEADER_LEN..body_end].to_vec(),
    };
    Ok(Decoded::Frame(envelope, &buffer[total..]))
}
