//! FVC1 chunk container, little-endian:
//!
//! ```text
//! "FVC1" | u32 frameCount | f64 fps | u32 width | u32 height | u8 channels
//! frameCount FRM1 records, ascending sequence numbers
//! u32 CRC32 of the records
//! ```

use thiserror::Error;

use crate::model::{encode_frame, read_frame, Frame, FrameError};

pub const CHUNK_MAGIC: &[u8; 4] = b"FVC1";
const HEADER_LEN: usize = 4 + 4 + 8 + 4 + 4 + 1;
const FOOTER_LEN: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChunkError {
    #[error("not an FVC1 chunk")]
    BadMagic,
    #[error("chunk truncated")]
    Truncated,
    #[error("CRC mismatch: stored {stored:08x}, computed {computed:08x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("bad frame record: {0}")]
    Frame(#[from] FrameError),
    #[error("chunk has no frames")]
    Empty,
    #[error("inconsistent chunk: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub frames: Vec<Frame>,
}

impl Chunk {
    pub fn sequence_numbers(&self) -> Vec<u64> {
        self.frames.iter().map(|f| f.sequence_nr).collect()
    }
}

/// Packs frames that share one geometry, in strictly ascending sequence order.
pub fn pack_chunk(frames: &[Frame], fps: f64) -> Result<Vec<u8>, ChunkError> {
    let first = frames.first().ok_or(ChunkError::Empty)?;
    let mut body = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        if (f.width, f.height, f.channels) != (first.width, first.height, first.channels) {
            return Err(ChunkError::Inconsistent(format!("frame {} has different dimensions", f.sequence_nr)));
        }
        if i > 0 && f.sequence_nr <= frames[i - 1].sequence_nr {
            return Err(ChunkError::Inconsistent(format!("frame {} out of order", f.sequence_nr)));
        }
        body.extend_from_slice(&encode_frame(f)?);
    }
    let mut out = Vec::with_capacity(HEADER_LEN + body.len() + FOOTER_LEN);
    out.extend_from_slice(CHUNK_MAGIC);
    out.extend_from_slice(&(frames.len() as u32).to_le_bytes());
    out.extend_from_slice(&fps.to_le_bytes());
    out.extend_from_slice(&first.width.to_le_bytes());
    out.extend_from_slice(&first.height.to_le_bytes());
    out.push(first.channels);
    out.extend_from_slice(&body);
    out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
    Ok(out)
}

pub fn unpack_chunk(bytes: &[u8]) -> Result<Chunk, ChunkError> {
    if bytes.len() < 4 || &bytes[..4] != CHUNK_MAGIC {
        return Err(ChunkError::BadMagic);
    }
    if bytes.len() < HEADER_LEN + FOOTER_LEN {
        return Err(ChunkError::Truncated);
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let count = u32_at(4) as usize;
    let fps = f64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let (width, height, channels) = (u32_at(16), u32_at(20), bytes[24]);
    let body = &bytes[HEADER_LEN..bytes.len() - FOOTER_LEN];
    let stored = u32_at(bytes.len() - FOOTER_LEN);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(ChunkError::CrcMismatch { stored, computed });
    }
    let mut cursor = body;
    let mut frames = Vec::with_capacity(count.min(1 << 16));
    while let Some(frame) = read_frame(&mut cursor)? {
        if (frame.width, frame.height, frame.channels) != (width, height, channels) {
            return Err(ChunkError::Inconsistent(format!("frame {} does not match the header", frame.sequence_nr)));
        }
        frames.push(frame);
    }
    if frames.len() != count {
        return Err(ChunkError::Inconsistent(format!("header says {count} frames, body holds {}", frames.len())));
    }
    Ok(Chunk { fps, width, height, channels, frames })
}
