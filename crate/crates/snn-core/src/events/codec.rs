//! Binary event-stream container (`EVT1`).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "EVT1"
//! 4       2     sensor width
//! 6       2     sensor height
//! 8       8     duration in microseconds
//! 16      16*n  event records
//! ```
//!
//! Each record: `u16 x`, `u16 y`, `u8 polarity` (0 = negative, 1 = positive),
//! three zero pad bytes, `u64 t`. Encoding and decoding round-trip exactly;
//! decoding re-validates every stream invariant and reports failures with the
//! byte offset of the offending record.

use super::{Event, EventError, EventStream, Polarity};
use std::fmt;

pub const MAGIC: [u8; 4] = *b"EVT1";
pub const HEADER_LEN: usize = 16;
pub const RECORD_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum CodecError {
    BadMagic { found: [u8; 4] },
    Truncated { offset: usize, expected: usize, actual: usize },
    BadPolarity { offset: usize, value: u8 },
    /// A record decodes but violates a stream invariant (coordinates, order,
    /// duration). `offset` is the start of the record.
    InvalidStream { offset: usize, source: EventError },
}

impl fmt::Display for CodecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodecError::BadMagic { found } => {
                write!(f, "bad magic {found:?}, expected {MAGIC:?}")
            }
            CodecError::Truncated { offset, expected, actual } => {
                write!(f, "truncated at byte {offset}: expected {expected} more bytes, found {actual}")
            }
            CodecError::BadPolarity { offset, value } => {
                write!(f, "invalid polarity byte {value} at byte {offset}")
            }
            CodecError::InvalidStream { offset, source } => {
                write!(f, "invalid record at byte {offset}: {source}")
            }
        }
    }
}

impl std::error::Error for CodecError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CodecError::InvalidStream { source, .. } => Some(source),
            _ => None,
        }
    }
}

pub fn encode(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * stream.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&stream.width().to_le_bytes());
    out.extend_from_slice(&stream.height().to_le_bytes());
    out.extend_from_slice(&stream.duration_us().to_le_bytes());
    for e in stream.events() {
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(match e.p {
            Polarity::Neg => 0,
            Polarity::Pos => 1,
        });
        out.extend_from_slice(&[0, 0, 0]);
        out.extend_from_slice(&e.t.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<EventStream, CodecError> {
    if bytes.len() < HEADER_LEN {
        return Err(CodecError::Truncated { offset: 0, expected: HEADER_LEN, actual: bytes.len() });
    }
    if bytes[..4] != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[..4]);
        return Err(CodecError::BadMagic { found });
    }
    let width = u16::from_le_bytes([bytes[4], bytes[5]]);
    let height = u16::from_le_bytes([bytes[6], bytes[7]]);
    let duration_us = u64::from_le_bytes(bytes[8..16].try_into().unwrap());

    let body = &bytes[HEADER_LEN..];
    if body.len() % RECORD_LEN != 0 {
        let whole = body.len() / RECORD_LEN * RECORD_LEN;
        return Err(CodecError::Truncated {
            offset: HEADER_LEN + whole,
            expected: RECORD_LEN,
            actual: body.len() - whole,
        });
    }
    let mut events = Vec::with_capacity(body.len() / RECORD_LEN);
    for (i, rec) in body.chunks_exact(RECORD_LEN).enumerate() {
        let offset = HEADER_LEN + i * RECORD_LEN;
        let x = u16::from_le_bytes([rec[0], rec[1]]);
        let y = u16::from_le_bytes([rec[2], rec[3]]);
        let p = match rec[4] {
            0 => Polarity::Neg,
            1 => Polarity::Pos,
            value => return Err(CodecError::BadPolarity { offset: offset + 4, value }),
        };
        let t = u64::from_le_bytes(rec[8..16].try_into().unwrap());
        events.push(Event { x, y, t, p });
    }
    EventStream::new(width, height, duration_us, events).map_err(|source| {
        let index = match &source {
            EventError::UnsortedEvents { index }
            | EventError::OutOfBounds { index, .. }
            | EventError::PastDuration { index, .. } => *index,
            _ => 0,
        };
        CodecError::InvalidStream { offset: HEADER_LEN + index * RECORD_LEN, source }
    })
}

pub fn write_file(path: &std::path::Path, stream: &EventStream) -> std::io::Result<()> {
    std::fs::write(path, encode(stream))
}

pub fn read_file(path: &std::path::Path) -> Result<EventStream, Box<dyn std::error::Error>> {
    let bytes = std::fs::read(path)?;
    Ok(decode(&bytes)?)
}
