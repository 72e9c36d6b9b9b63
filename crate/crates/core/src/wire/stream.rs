use std::io::{self, Read, Write};

use super::{decode_frame, encode_frame, Decoded, Envelope, FrameError};

/// Pulls whole envelopes off a byte stream.
///
/// A framing error is terminal: the reader does not try to resynchronize.
pub struct FramedReader<R> {
    inner: R,
    buf: Vec<u8>,
    chunk: Box<[u8]>,
}

impl<R: Read> FramedReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            buf: Vec::new(),
            chunk: vec![0; 64 * 1024].into_boxed_slice(),
        }
    }

    /// Returns `Ok(None)` on a clean end of stream between frames.
    pub fn next_envelope(&mut self) -> io::Result<Option<Envelope>> {
        loop {
            match decode_frame(&self.buf) {
                Ok(Decoded::Frame(env, rest)) => {
                    let consumed = self.buf.len() - rest.len();
                    self.buf.drain(..consumed);
                    return Ok(Some(env));
                }
                Ok(Decoded::NeedMoreData) => {}
                Err(e) => return Err(framing_error(e)),
            }
            let n = self.inner.read(&mut self.chunk)?;
            if n == 0 {
                if self.buf.is_empty() {
                    return Ok(None);
                }
                return Err(io::Error::new(
                    io::ErrorKind::UnexpectedEof,
                    format!("stream closed inside a frame ({} bytes buffered)", self.buf.len()),
                ));
            }
            self.buf.extend_from_slice(&self.chunk[..n]);
        }
    }
}

pub fn write_envelope<W: Write>(w: &mut W, env: &Envelope) -> io::Result<()> {
    let bytes = encode_frame(env).map_err(framing_error)?;
    w.write_all(&bytes)
}

fn framing_error(e: FrameError) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e)
}
