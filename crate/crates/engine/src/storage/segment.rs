//! Immutable sorted segment files.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! "ARC1" | version u16
//! block*                      each block = [payload | CRC32C u32]
//! footer:
//!   u32 region_count
//!   per region: u16 name_len | name | u64 root_offset | u32 root_len
//!   data-block index handle: u64 offset | u32 len
//!   row_count u64 | min_seqno u64 | max_seqno u64
//! footer_len u32 | "ARC1"
//! ```
//!
//! Data blocks hold rows sorted by primary key (all versions of a key stay
//! in one block, oldest first). The data-block index block maps first keys
//! and row ordinals to block handles. Per-column secondary index regions are
//! self-contained block trees written by the index builders; only their root
//! handles appear in the footer.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::storage::block::{append_block, verify_block, BlockHandle, DATA_BLOCK_TARGET};
use crate::storage::cache::BlockCache;
use crate::storage::codec::{self, Reader};
use crate::value::{KeyValue, Row};

const SEGMENT_MAGIC: &[u8; 4] = b"ARC1";
const FORMAT_VERSION: u16 = 1;

/// One data block's entry in the data-block index.
#[derive(Debug, Clone)]
pub struct DataBlockEntry {
    pub first_key: KeyValue,
    pub row_start: u32,
    pub handle: BlockHandle,
}

pub struct Segment {
    pub id: u64,
    pub level: u32,
    pub path: PathBuf,
    pub row_count: u64,
    pub min_seqno: u64,
    pub max_seqno: u64,
    pub min_key: KeyValue,
    pub max_key: KeyValue,
    pub index_regions: BTreeMap<String, BlockHandle>,
    pub data_blocks: Vec<DataBlockEntry>,
    file: File,
    obsolete: AtomicBool,
}

impl std::fmt::Debug for Segment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Segment")
            .field("id", &self.id)
            .field("level", &self.level)
            .field("rows", &self.row_count)
            .finish()
    }
}

impl Segment {
    pub fn file_name(level: u32, id: u64) -> String {
        format!("seg-{level:03}-{id:010}.seg")
    }

    pub fn parse_file_name(name: &str) -> Option<(u32, u64)> {
        let stem = name.strip_prefix("seg-")?.strip_suffix(".seg")?;
        let (level, id) = stem.split_once('-')?;
        Some((level.parse().ok()?, id.parse().ok()?))
    }

    pub fn open(path: &Path) -> Result<Arc<Segment>> {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::MalformedSegment(format!("{path:?}: bad name")))?;
        let (level, id) = Self::parse_file_name(name)
            .ok_or_else(|| Error::MalformedSegment(format!("{path:?}: bad name")))?;
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        if len < 6 + 8 {
            return Err(Error::MalformedSegment(format!("{path:?}: too short")));
        }
        let mut head = [0u8; 6];
        file.read_exact_at(&mut head, 0)?;
        if &head[..4] != SEGMENT_MAGIC {
            return Err(Error::MalformedSegment(format!("{path:?}: bad magic")));
        }
        let mut tail = [0u8; 8];
        file.read_exact_at(&mut tail, len - 8)?;
        if &tail[4..] != SEGMENT_MAGIC {
            return Err(Error::MalformedSegment(format!("{path:?}: bad footer magic")));
        }
        let footer_len = u32::from_le_bytes(tail[..4].try_into().unwrap()) as u64;
        if footer_len + 8 > len {
            return Err(Error::MalformedSegment(format!("{path:?}: bad footer length")));
        }
        let mut footer = vec![0u8; footer_len as usize];
        file.read_exact_at(&mut footer, len - 8 - footer_len)?;
        let mut r = Reader::new(&footer);
        let region_count = r.u32()? as usize;
        let mut index_regions = BTreeMap::new();
        for _ in 0..region_count {
            let name_len = r.u16()? as usize;
            let mut name_buf = vec![0u8; name_len];
            for b in name_buf.iter_mut() {
                *b = r.u8()?;
            }
            let name = String::from_utf8(name_buf)
                .map_err(|_| Error::MalformedSegment("bad region name".into()))?;
            let offset = r.u64()?;
            let length = r.u32()?;
            index_regions.insert(name, BlockHandle::new(id, offset, length));
        }
        let dbi_handle = BlockHandle::new(id, r.u64()?, r.u32()?);
        let row_count = r.u64()?;
        let min_seqno = r.u64()?;
        let max_seqno = r.u64()?;

        // data-block index: read directly, verified, not through the cache
        let mut raw = vec![0u8; dbi_handle.length as usize + 4];
        file.read_exact_at(&mut raw, dbi_handle.offset)?;
        let payload = verify_block(id, dbi_handle.offset, &raw)?;
        let (data_blocks, min_key, max_key) = decode_data_block_index(id, &payload)?;

        Ok(Arc::new(Segment {
            id,
            level,
            path: path.to_path_buf(),
            row_count,
            min_seqno,
            max_seqno,
            min_key,
            max_key,
            index_regions,
            data_blocks,
            file,
            obsolete: AtomicBool::new(false),
        }))
    }

    /// Read one block through the cache, counting physical reads.
    pub fn read_block(&self, handle: BlockHandle, cache: &BlockCache) -> Result<Arc<Vec<u8>>> {
        debug_assert_eq!(handle.segment_id, self.id);
        if let Some(hit) = cache.get(self.id, handle.offset) {
            return Ok(hit);
        }
        let mut raw = vec![0u8; handle.length as usize + 4];
        self.file.read_exact_at(&mut raw, handle.offset)?;
        let payload = verify_block(self.id, handle.offset, &raw)?;
        cache.admit(self.id, handle.offset, payload.clone());
        Ok(payload)
    }

    pub fn key_in_range(&self, key: &KeyValue) -> bool {
        self.row_count > 0 && *key >= self.min_key && *key <= self.max_key
    }

    /// Newest version of `key` with seqno <= bound within this segment.
    pub fn get(&self, key: &KeyValue, seqno_bound: u64, cache: &BlockCache) -> Result<Option<Row>> {
        if !self.key_in_range(key) {
            return Ok(None);
        }
        let idx = match self.data_blocks.partition_point(|e| e.first_key <= *key) {
            0 => return Ok(None),
            n => n - 1,
        };
        let rows = self.decode_block_rows(self.data_blocks[idx].handle, cache)?;
        let mut best: Option<Row> = None;
        for row in rows {
            if row.key == *key && row.seqno <= seqno_bound {
                match &best {
                    Some(b) if b.seqno >= row.seqno => {}
                    _ => best = Some(row),
                }
            }
        }
        Ok(best)
    }

    pub fn decode_block_rows(&self, handle: BlockHandle, cache: &BlockCache) -> Result<Vec<Row>> {
        let payload = self.read_block(handle, cache)?;
        let mut r = Reader::new(&payload);
        let n = r.u32()? as usize;
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            rows.push(codec::read_row(&mut r)?);
        }
        Ok(rows)
    }

    /// Fetch a specific version by key+seqno, used to resolve index entries.
    pub fn fetch(
        &self,
        handle: BlockHandle,
        key: &KeyValue,
        seqno: u64,
        cache: &BlockCache,
    ) -> Result<Option<Row>> {
        let rows = self.decode_block_rows(handle, cache)?;
        Ok(rows.into_iter().find(|r| r.key == *key && r.seqno == seqno))
    }

    pub fn mark_obsolete(&self) {
        self.obsolete.store(true, Ordering::SeqCst);
    }

    /// Streaming row iterator in (key, seqno) order.
    pub fn iter_rows<'a>(&'a self, cache: &'a BlockCache) -> SegmentRowIter<'a> {
        SegmentRowIter {
            segment: self,
            cache,
            block: 0,
            buffer: Vec::new(),
            pos: 0,
        }
    }
}

impl Drop for Segment {
    fn drop(&mut self) {
        if self.obsolete.load(Ordering::SeqCst) {
            let _ = std::fs::remove_file(&self.path);
        }
    }
}

pub struct SegmentRowIter<'a> {
    segment: &'a Segment,
    cache: &'a BlockCache,
    block: usize,
    buffer: Vec<Row>,
    pos: usize,
}

impl Iterator for SegmentRowIter<'_> {
    type Item = Result<Row>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.pos < self.buffer.len() {
                let row = self.buffer[self.pos].clone();
                self.pos += 1;
                return Some(Ok(row));
            }
            if self.block >= self.segment.data_blocks.len() {
                return None;
            }
            let handle = self.segment.data_blocks[self.block].handle;
            self.block += 1;
            self.pos = 0;
            match self.segment.decode_block_rows(handle, self.cache) {
                Ok(rows) => self.buffer = rows,
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

fn decode_data_block_index(
    segment_id: u64,
    payload: &[u8],
) -> Result<(Vec<DataBlockEntry>, KeyValue, KeyValue)> {
    let mut r = Reader::new(payload);
    let n = r.u32()? as usize;
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let first_key = codec::read_key(&mut r)?;
        let row_start = r.u32()?;
        let offset = r.u64()?;
        let length = r.u32()?;
        entries.push(DataBlockEntry {
            first_key,
            row_start,
            handle: BlockHandle::new(segment_id, offset, length),
        });
    }
    let min_key = codec::read_key(&mut r)?;
    let max_key = codec::read_key(&mut r)?;
    Ok((entries, min_key, max_key))
}

/// A row paired with its physical position, handed to index builders.
#[derive(Debug, Clone)]
pub struct IndexableRow {
    pub row: Row,
    pub ordinal: u32,
    pub handle: BlockHandle,
}

/// Accumulates one segment file in memory, then persists it atomically.
pub struct SegmentBuilder {
    pub segment_id: u64,
    pub level: u32,
    buf: Vec<u8>,
    data_blocks: Vec<DataBlockEntry>,
    indexable: Vec<IndexableRow>,
    index_regions: BTreeMap<String, BlockHandle>,
    row_count: u64,
    min_seqno: u64,
    max_seqno: u64,
    min_key: Option<KeyValue>,
    max_key: Option<KeyValue>,
}

impl SegmentBuilder {
    pub fn new(segment_id: u64, level: u32) -> Self {
        let mut buf = Vec::with_capacity(1 << 20);
        buf.extend_from_slice(SEGMENT_MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        SegmentBuilder {
            segment_id,
            level,
            buf,
            data_blocks: Vec::new(),
            indexable: Vec::new(),
            index_regions: BTreeMap::new(),
            row_count: 0,
            min_seqno: u64::MAX,
            max_seqno: 0,
            min_key: None,
            max_key: None,
        }
    }

    /// Write all data blocks. `rows` must be sorted by key, versions of one
    /// key adjacent and oldest first.
    pub fn add_rows(&mut self, rows: &[Row]) -> Result<()> {
        debug_assert!(rows.windows(2).all(|w| {
            (w[0].key < w[1].key) || (w[0].key == w[1].key && w[0].seqno < w[1].seqno)
        }));
        let mut pending: Vec<&Row> = Vec::new();
        let mut pending_bytes = 0usize;
        let mut ordinal = 0u32;
        for (i, row) in rows.iter().enumerate() {
            self.min_seqno = self.min_seqno.min(row.seqno);
            self.max_seqno = self.max_seqno.max(row.seqno);
            if self.min_key.is_none() {
                self.min_key = Some(row.key.clone());
            }
            self.max_key = Some(row.key.clone());
            pending.push(row);
            pending_bytes += row.approx_size();
            let key_boundary = rows.get(i + 1).map(|n| n.key != row.key).unwrap_or(true);
            if key_boundary && pending_bytes >= DATA_BLOCK_TARGET {
                ordinal = self.cut_block(&mut pending, ordinal)?;
                pending_bytes = 0;
            }
        }
        if !pending.is_empty() {
            self.cut_block(&mut pending, ordinal)?;
        }
        Ok(())
    }

    fn cut_block(&mut self, pending: &mut Vec<&Row>, first_ordinal: u32) -> Result<u32> {
        let mut payload = Vec::with_capacity(DATA_BLOCK_TARGET + 512);
        codec::put_u32(&mut payload, pending.len() as u32);
        for row in pending.iter() {
            codec::put_row(&mut payload, row);
        }
        let handle = append_block(&mut self.buf, self.segment_id, &payload);
        self.data_blocks.push(DataBlockEntry {
            first_key: pending[0].key.clone(),
            row_start: first_ordinal,
            handle,
        });
        let mut ordinal = first_ordinal;
        for row in pending.drain(..) {
            self.indexable.push(IndexableRow {
                row: row.clone(),
                ordinal,
                handle,
            });
            ordinal += 1;
            self.row_count += 1;
        }
        Ok(ordinal)
    }

    /// Rows with their block handles, available once `add_rows` ran.
    pub fn indexable_rows(&self) -> &[IndexableRow] {
        &self.indexable
    }

    /// Append one index block; used by the per-modality index builders.
    pub fn add_index_block(&mut self, payload: &[u8]) -> BlockHandle {
        append_block(&mut self.buf, self.segment_id, payload)
    }

    pub fn set_index_region(&mut self, column: &str, root: BlockHandle) {
        self.index_regions.insert(column.to_string(), root);
    }

    /// Write the data-block index and footer, persist, fsync, and open.
    pub fn finish(mut self, dir: &Path) -> Result<Arc<Segment>> {
        let mut dbi = Vec::new();
        codec::put_u32(&mut dbi, self.data_blocks.len() as u32);
        for entry in &self.data_blocks {
            codec::put_key(&mut dbi, &entry.first_key);
            codec::put_u32(&mut dbi, entry.row_start);
            codec::put_u64(&mut dbi, entry.handle.offset);
            codec::put_u32(&mut dbi, entry.handle.length);
        }
        let placeholder = KeyValue::Int(0);
        codec::put_key(&mut dbi, self.min_key.as_ref().unwrap_or(&placeholder));
        codec::put_key(&mut dbi, self.max_key.as_ref().unwrap_or(&placeholder));
        let dbi_handle = append_block(&mut self.buf, self.segment_id, &dbi);

        let mut footer = Vec::new();
        codec::put_u32(&mut footer, self.index_regions.len() as u32);
        for (name, handle) in &self.index_regions {
            codec::put_u16(&mut footer, name.len() as u16);
            footer.extend_from_slice(name.as_bytes());
            codec::put_u64(&mut footer, handle.offset);
            codec::put_u32(&mut footer, handle.length);
        }
        codec::put_u64(&mut footer, dbi_handle.offset);
        codec::put_u32(&mut footer, dbi_handle.length);
        codec::put_u64(&mut footer, self.row_count);
        codec::put_u64(&mut footer, if self.row_count == 0 { 0 } else { self.min_seqno });
        codec::put_u64(&mut footer, self.max_seqno);
        let footer_len = footer.len() as u32;
        self.buf.extend_from_slice(&footer);
        self.buf.extend_from_slice(&footer_len.to_le_bytes());
        self.buf.extend_from_slice(SEGMENT_MAGIC);

        std::fs::create_dir_all(dir)?;
        let path = dir.join(Segment::file_name(self.level, self.segment_id));
        let tmp = path.with_extension("tmp");
        {
            let mut f = OpenOptions::new().create(true).write(true).truncate(true).open(&tmp)?;
            f.write_all(&self.buf)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, &path)?;
        Segment::open(&path)
    }
}
