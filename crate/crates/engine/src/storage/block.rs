//! Checksummed block primitives: every block in a segment file is written as
//! `[payload | CRC32C u32]` and addressed by a `BlockHandle`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target payload size for data blocks. Index blocks are variable-sized.
pub const DATA_BLOCK_TARGET: usize = 4096;

/// Address of one block: owning segment, byte offset of the payload, and
/// payload length (the CRC32C trailer is not included in `length`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockHandle {
    pub segment_id: u64,
    pub offset: u64,
    pub length: u32,
}

impl BlockHandle {
    pub fn new(segment_id: u64, offset: u64, length: u32) -> Self {
        BlockHandle {
            segment_id,
            offset,
            length,
        }
    }
}

/// Verify a payload+trailer slice read from disk; returns the payload.
pub fn verify_block(segment_id: u64, offset: u64, raw: &[u8]) -> Result<Arc<Vec<u8>>> {
    if raw.len() < 4 {
        return Err(Error::MalformedSegment(format!(
            "block at offset {offset} shorter than checksum trailer"
        )));
    }
    let (payload, trailer) = raw.split_at(raw.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    let actual = crc32c::crc32c(payload);
    if stored != actual {
        return Err(Error::Corruption { segment_id, offset });
    }
    Ok(Arc::new(payload.to_vec()))
}

/// Append a payload with its CRC32C trailer to an in-memory file image,
/// returning the handle for the payload.
pub fn append_block(file_buf: &mut Vec<u8>, segment_id: u64, payload: &[u8]) -> BlockHandle {
    let offset = file_buf.len() as u64;
    file_buf.extend_from_slice(payload);
    file_buf.extend_from_slice(&crc32c::crc32c(payload).to_le_bytes());
    BlockHandle::new(segment_id, offset, payload.len() as u32)
}
