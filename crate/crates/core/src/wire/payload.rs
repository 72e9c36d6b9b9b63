//! Typed payloads carried inside envelopes.
//!
//! Every payload is big-endian; strings are a `u16` byte length followed by
//! UTF-8. Domain types elsewhere in the crate implement [`WirePayload`]
//! next to their definitions.

use bytes::{Buf, BufMut};
use thiserror::Error;

use super::Channel;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PayloadError {
    #[error("payload truncated while reading {0}")]
    Truncated(&'static str),
    #[error("invalid UTF-8 in {0}")]
    BadUtf8(&'static str),
    #[error("invalid {field}: {reason}")]
    Invalid {
        field: &'static str,
        reason: String,
    },
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
}

pub type PayloadResult<T> = Result<T, PayloadError>;

pub trait WirePayload: Sized {
    fn encode_into(&self, out: &mut Vec<u8>);

    fn decode_from(buf: &mut &[u8]) -> PayloadResult<Self>;

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    /// Decodes a whole payload, rejecting trailing garbage.
    fn from_bytes(mut bytes: &[u8]) -> PayloadResult<Self> {
        let value = Self::decode_from(&mut bytes)?;
        if !bytes.is_empty() {
            return Err(PayloadError::Trailing(bytes.len()));
        }
        Ok(value)
    }
}

pub(crate) fn need(buf: &&[u8], n: usize, field: &'static str) -> PayloadResult<()> {
    if buf.remaining() < n {
        Err(PayloadError::Truncated(field))
    } else {
        Ok(())
    }
}

pub(crate) fn get_u8(buf: &mut &[u8], field: &'static str) -> PayloadResult<u8> {
    need(buf, 1, field)?;
    Ok(buf.get_u8())
}

pub(crate) fn get_u16(buf: &mut &[u8], field: &'static str) -> PayloadResult<u16> {
    need(buf, 2, field)?;
    Ok(buf.get_u16())
}

pub(crate) fn get_u32(buf: &mut &[u8], field: &'static str) -> PayloadResult<u32> {
    need(buf, 4, field)?;
    Ok(buf.get_u32())
}

pub(crate) fn get_u64(buf: &mut &[u8], field: &'static str) -> PayloadResult<u64> {
    need(buf, 8, field)?;
    Ok(buf.get_u64())
}

pub(crate) fn get_f64(buf: &mut &[u8], field: &'static str) -> PayloadResult<f64> {
    need(buf, 8, field)?;
    Ok(buf.get_f64())
}

pub(crate) fn get_bytes(buf: &mut &[u8], n: usize, field: &'static str) -> PayloadResult<Vec<u8>> {
    need(buf, n, field)?;
    let out = buf[..n].to_vec();
    buf.advance(n);
    Ok(out)
}

pub(crate) fn put_str(out: &mut Vec<u8>, s: &str) {
    let bytes = s.as_bytes();
    let len = bytes.len().min(u16::MAX as usize);
    out.put_u16(len as u16);
    out.put_slice(&bytes[..len]);
}

pub(crate) fn get_str(buf: &mut &[u8], field: &'static str) -> PayloadResult<String> {
    let len = get_u16(buf, field)? as usize;
    let raw = get_bytes(buf, len, field)?;
    String::from_utf8(raw).map_err(|_| PayloadError::BadUtf8(field))
}

pub(crate) fn put_opt_f64(out: &mut Vec<u8>, v: Option<f64>) {
    match v {
        Some(x) => {
            out.put_u8(1);
            out.put_f64(x);
        }
        None => out.put_u8(0),
    }
}

pub(crate) fn get_opt_f64(buf: &mut &[u8], field: &'static str) -> PayloadResult<Option<f64>> {
    match get_u8(buf, field)? {
        0 => Ok(None),
        1 => Ok(Some(get_f64(buf, field)?)),
        flag => Err(PayloadError::Invalid {
            field,
            reason: format!("presence flag {flag}"),
        }),
    }
}

/// One grayscale video frame streamed from the glass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePayload {
    pub frame_seq: u32,
    pub capture_time_ms: u64,
    pub width: u16,
    pub height: u16,
    /// Row-major 8-bit gray, `width * height` bytes.
    pub pixels: Vec<u8>,
}

impl FramePayload {
    pub fn new(
        frame_seq: u32,
        capture_time_ms: u64,
        width: u16,
        height: u16,
        pixels: Vec<u8>,
    ) -> PayloadResult<Self> {
        let frame = Self {
            frame_seq,
            capture_time_ms,
            width,
            height,
            pixels,
        };
        frame.validate()?;
        Ok(frame)
    }

    fn validate(&self) -> PayloadResult<()> {
        if self.width == 0 || self.height == 0 {
            return Err(PayloadError::Invalid {
                field: "frame dimensions",
                reason: format!("{}x{}", self.width, self.height),
            });
        }
        let expected = self.width as usize * self.height as usize;
        if self.pixels.len() != expected {
            return Err(PayloadError::Invalid {
                field: "frame pixels",
                reason: format!("{} bytes for {}x{}", self.pixels.len(), self.width, self.height),
            });
        }
        Ok(())
    }
}

impl WirePayload for FramePayload {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.put_u32(self.frame_seq);
        out.put_u64(self.capture_time_ms);
        out.put_u16(self.width);
        out.put_u16(self.height);
        out.put_slice(&self.pixels);
    }

    fn decode_from(buf: &mut &[u8]) -> PayloadResult<Self> {
        let frame_seq = get_u32(buf, "frame_seq")?;
        let capture_time_ms = get_u64(buf, "capture_time_ms")?;
        let width = get_u16(buf, "width")?;
        let height = get_u16(buf, "height")?;
        let pixels = get_bytes(buf, width as usize * height as usize, "pixels")?;
        let frame = Self {
            frame_seq,
            capture_time_ms,
            width,
            height,
            pixels,
        };
        frame.validate()?;
        Ok(frame)
    }
}

/// Opens a session (control channel) or binds the data channel to one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hello {
    pub user_id: String,
    pub channel: Channel,
}

impl WirePayload for Hello {
    fn encode_into(&self, out: &mut Vec<u8>) {
        put_str(out, &self.user_id);
        out.put_u8(self.channel.code());
    }

    fn decode_from(buf: &mut &[u8]) -> PayloadResult<Self> {
        let user_id = get_str(buf, "user_id")?;
        let code = get_u8(buf, "channel")?;
        let channel = Channel::from_code(code).ok_or(PayloadError::Invalid {
            field: "channel",
            reason: format!("code {code}"),
        })?;
        Ok(Self { user_id, channel })
    }
}

/// Body of SERVICE_ACTIVATE / SERVICE_DEACTIVATE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceNotice {
    pub service_id: String,
}

impl WirePayload for ServiceNotice {
    fn encode_into(&self, out: &mut Vec<u8>) {
        put_str(out, &self.service_id);
    }

    fn decode_from(buf: &mut &[u8]) -> PayloadResult<Self> {
        Ok(Self {
            service_id: get_str(buf, "service_id")?,
        })
    }
}

/// Body of ERROR messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorReport {
    pub code: u16,
    pub message: String,
}

impl ErrorReport {
    pub const NO_ACTIVE_SERVICE: u16 = 1;
    pub const TYPE_NOT_ACCEPTED: u16 = 2;
    pub const BAD_PAYLOAD: u16 = 3;
    pub const SERVICE_FAILURE: u16 = 4;
    pub const PROTOCOL: u16 = 5;
    pub const STALE_CONTEXT: u16 = 6;
}

impl WirePayload for ErrorReport {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.put_u16(self.code);
        put_str(out, &self.message);
    }

    fn decode_from(buf: &mut &[u8]) -> PayloadResult<Self> {
        Ok(Self {
            code: get_u16(buf, "error code")?,
            message: get_str(buf, "error message")?,
        })
    }
}

/// Body of NAV_SELECT_DEST and NAV_ARRIVED.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRef {
    pub node: u32,
}

impl WirePayload for NodeRef {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.put_u32(self.node);
    }

    fn decode_from(buf: &mut &[u8]) -> PayloadResult<Self> {
        Ok(Self {
            node: get_u32(buf, "node")?,
        })
    }
}

/// Body of UPLOAD_BEGIN (announced size) and UPLOAD_ACK (received size).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByteCount {
    pub bytes: u64,
}

impl WirePayload for ByteCount {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.put_u64(self.bytes);
    }

    fn decode_from(buf: &mut &[u8]) -> PayloadResult<Self> {
        Ok(Self {
            bytes: get_u64(buf, "byte count")?,
        })
    }
}
