//! Per-segment inverted-file (IVF) vector index with block-level access.
//!
//! Centroid metadata root: tag 1 | u32 dim | u32 count | per centroid
//! [dim × f32 | posting handle (u64, u32) | u32 length].
//! Posting block: u32 count | per entry [dim × f32 | key | data handle
//! (u64, u32) | u64 seqno | u32 ordinal]; entries assigned to their nearest
//! centroid under L2.
//!
//! Segment search is three steps: load centroid metadata, read the posting
//! lists of the n_probe nearest centroids, then resolve records through the
//! stored block handles — at most 1 + n_probe index block reads.

pub mod kmeans;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::index::{RowLocation, ScoredItem, Summary, KIND_IVF};
use crate::storage::cache::BlockCache;
use crate::storage::codec::{self, Reader};
use crate::storage::segment::{Segment, SegmentBuilder};
use crate::storage::BlockHandle;
use crate::value::KeyValue;

pub use kmeans::{l2, nearest_centroid, squared_l2, train_centroids};

/// Default probe width: n_centroids/8, at least 1.
pub fn default_n_probe(n_centroids: usize) -> usize {
    n_centroids.div_ceil(8).max(1)
}

struct CentroidEntry {
    centroid: Vec<f32>,
    posting: BlockHandle,
    len: u32,
}

struct CentroidTable {
    dim: usize,
    entries: Vec<CentroidEntry>,
}

fn read_centroid_table(segment: &Segment, root: BlockHandle, cache: &BlockCache) -> Result<CentroidTable> {
    let payload = segment.read_block(root, cache)?;
    let mut r = Reader::new(&payload);
    if r.u8()? != KIND_IVF {
        return Err(Error::MalformedSegment("expected ivf root".into()));
    }
    let dim = r.u32()? as usize;
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let mut centroid = Vec::with_capacity(dim);
        for _ in 0..dim {
            centroid.push(r.f32()?);
        }
        let posting = BlockHandle::new(segment.id, r.u64()?, r.u32()?);
        let len = r.u32()?;
        entries.push(CentroidEntry {
            centroid,
            posting,
            len,
        });
    }
    Ok(CentroidTable { dim, entries })
}

struct PostingEntry {
    vector: Vec<f32>,
    key: KeyValue,
    handle: BlockHandle,
    seqno: u64,
    #[allow(dead_code)]
    ordinal: u32,
}

fn read_posting(segment: &Segment, handle: BlockHandle, dim: usize, cache: &BlockCache) -> Result<Vec<PostingEntry>> {
    let payload = segment.read_block(handle, cache)?;
    let mut r = Reader::new(&payload);
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut vector = Vec::with_capacity(dim);
        for _ in 0..dim {
            vector.push(r.f32()?);
        }
        let key = codec::read_key(&mut r)?;
        let data = BlockHandle::new(segment.id, r.u64()?, r.u32()?);
        let seqno = r.u64()?;
        let ordinal = r.u32()?;
        out.push(PostingEntry {
            vector,
            key,
            handle: data,
            seqno,
            ordinal,
        });
    }
    Ok(out)
}

/// Build the IVF region for a segment under construction. Null vectors are
/// excluded; Σ posting lengths equals the count of indexed rows.
pub fn build_ivf(
    builder: &mut SegmentBuilder,
    column_idx: usize,
    n_centroids: usize,
) -> Result<(BlockHandle, Summary)> {
    struct Indexed<'a> {
        vector: &'a [f32],
        ordinal: u32,
        key: KeyValue,
        handle: BlockHandle,
        seqno: u64,
    }
    let rows: Vec<Indexed> = builder
        .indexable_rows()
        .iter()
        .filter(|ir| !ir.row.tombstone)
        .filter_map(|ir| {
            ir.row.values.get(column_idx)?.as_vector().map(|v| Indexed {
                vector: v,
                ordinal: ir.ordinal,
                key: ir.row.key.clone(),
                handle: ir.handle,
                seqno: ir.row.seqno,
            })
        })
        .collect();

    if rows.is_empty() {
        let mut root = Vec::new();
        root.push(KIND_IVF);
        codec::put_u32(&mut root, 0); // dim
        codec::put_u32(&mut root, 0); // centroid count
        return Ok((builder.add_index_block(&root), Summary::Empty));
    }

    let dim = rows[0].vector.len();
    let vectors: Vec<&[f32]> = rows.iter().map(|r| r.vector).collect();
    let centroids = train_centroids(&vectors, n_centroids, builder.segment_id);

    let mut cells: Vec<Vec<&Indexed>> = vec![Vec::new(); centroids.len()];
    for row in &rows {
        cells[nearest_centroid(&centroids, row.vector)].push(row);
    }

    // payloads are fully serialized before any block is appended: the row
    // data borrows the builder immutably
    let mut payloads = Vec::with_capacity(centroids.len());
    for cell in &mut cells {
        cell.sort_by(|a, b| a.key.cmp(&b.key).then(a.seqno.cmp(&b.seqno)));
        let mut payload = Vec::new();
        codec::put_u32(&mut payload, cell.len() as u32);
        for entry in cell.iter() {
            for &c in entry.vector {
                codec::put_f32(&mut payload, c);
            }
            codec::put_key(&mut payload, &entry.key);
            codec::put_u64(&mut payload, entry.handle.offset);
            codec::put_u32(&mut payload, entry.handle.length);
            codec::put_u64(&mut payload, entry.seqno);
            codec::put_u32(&mut payload, entry.ordinal);
        }
        payloads.push((payload, cell.len() as u32));
    }
    drop(cells);
    drop(rows);
    let posting_handles: Vec<(BlockHandle, u32)> = payloads
        .into_iter()
        .map(|(payload, len)| (builder.add_index_block(&payload), len))
        .collect();

    let mut root = Vec::new();
    root.push(KIND_IVF);
    codec::put_u32(&mut root, dim as u32);
    codec::put_u32(&mut root, centroids.len() as u32);
    for (centroid, (posting, len)) in centroids.iter().zip(&posting_handles) {
        for &c in centroid {
            codec::put_f32(&mut root, c);
        }
        codec::put_u64(&mut root, posting.offset);
        codec::put_u32(&mut root, posting.length);
        codec::put_u32(&mut root, *len);
    }
    Ok((
        builder.add_index_block(&root),
        Summary::Centroids { centroids },
    ))
}

pub fn read_summary(r: &mut Reader<'_>) -> Result<Summary> {
    let dim = r.u32()? as usize;
    let count = r.u32()? as usize;
    if count == 0 {
        return Ok(Summary::Empty);
    }
    let mut centroids = Vec::with_capacity(count);
    for _ in 0..count {
        let mut centroid = Vec::with_capacity(dim);
        for _ in 0..dim {
            centroid.push(r.f32()?);
        }
        let _posting = (r.u64()?, r.u32()?);
        let _len = r.u32()?;
        centroids.push(centroid);
    }
    Ok(Summary::Centroids { centroids })
}

/// Σ posting lengths, read from the centroid table (conservation checks).
pub fn posting_length_sum(segment: &Segment, root: BlockHandle, cache: &BlockCache) -> Result<u64> {
    let table = read_centroid_table(segment, root, cache)?;
    Ok(table.entries.iter().map(|e| e.len as u64).sum())
}

/// Centroid count in the segment's table.
pub fn centroid_count(segment: &Segment, root: BlockHandle, cache: &BlockCache) -> Result<usize> {
    Ok(read_centroid_table(segment, root, cache)?.entries.len())
}

fn probe_order(table: &CentroidTable, query: &[f32], n_probe: usize) -> Vec<usize> {
    let mut order: Vec<(f32, usize)> = table
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (squared_l2(&e.centroid, query), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order
        .into_iter()
        .take(n_probe.clamp(1, table.entries.len()))
        .map(|(_, i)| i)
        .collect()
}

/// Exact top-k among the vectors in the probed posting lists of one segment.
/// Ties break by (distance, key).
pub fn search_segment(
    segment: &Segment,
    root: BlockHandle,
    query: &[f32],
    n_probe: usize,
    k: usize,
    cache: &BlockCache,
) -> Result<Vec<ScoredItem>> {
    let table = read_centroid_table(segment, root, cache)?;
    if table.entries.is_empty() {
        return Ok(Vec::new());
    }
    if table.dim != query.len() {
        return Err(Error::DimensionMismatch {
            column: String::new(),
            expected: table.dim,
            got: query.len(),
        });
    }
    let mut items = Vec::new();
    for cell in probe_order(&table, query, n_probe) {
        for entry in read_posting(segment, table.entries[cell].posting, table.dim, cache)? {
            items.push(ScoredItem {
                distance: l2(&entry.vector, query),
                key: entry.key,
                seqno: entry.seqno,
                location: RowLocation::Disk(entry.handle),
            });
        }
    }
    items.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.key.cmp(&b.key)));
    items.truncate(k);
    Ok(items)
}

/// All rows with L2(query, v) strictly below the threshold. Probes every
/// cell, so the result is exact over the segment: serving a θ-filter from
/// the index may not drop rows.
pub fn threshold_scan(
    segment: &Segment,
    root: BlockHandle,
    query: &[f32],
    threshold: f64,
    cache: &BlockCache,
) -> Result<Vec<(u32, crate::index::CandidateRow, f64)>> {
    let table = read_centroid_table(segment, root, cache)?;
    if table.entries.is_empty() {
        return Ok(Vec::new());
    }
    if table.dim != query.len() {
        return Err(Error::DimensionMismatch {
            column: String::new(),
            expected: table.dim,
            got: query.len(),
        });
    }
    let mut out = Vec::new();
    for entry in &table.entries {
        for posting in read_posting(segment, entry.posting, table.dim, cache)? {
            let d = l2(&posting.vector, query);
            if d < threshold {
                out.push((
                    posting.ordinal,
                    crate::index::CandidateRow {
                        key: posting.key,
                        seqno: posting.seqno,
                        location: crate::index::RowLocation::Disk(posting.handle),
                    },
                    d,
                ));
            }
        }
    }
    Ok(out)
}

/// Lazy per-segment sorted-distance iterator over the probed cells. The
/// candidate universe is the probed subset; distances are yielded in
/// non-decreasing order over that universe.
pub struct SegmentVectorIter {
    segment: Arc<Segment>,
    root: BlockHandle,
    query: Vec<f32>,
    n_probe: usize,
    cache: Arc<BlockCache>,
    opened: Option<std::vec::IntoIter<ScoredItem>>,
    last: Option<f64>,
}

impl SegmentVectorIter {
    pub fn new(
        segment: Arc<Segment>,
        root: BlockHandle,
        query: Vec<f32>,
        n_probe: usize,
        cache: Arc<BlockCache>,
    ) -> Self {
        SegmentVectorIter {
            segment,
            root,
            query,
            n_probe,
            cache,
            opened: None,
            last: None,
        }
    }

    fn open(&mut self) -> Result<()> {
        if self.opened.is_some() {
            return Ok(());
        }
        let table = read_centroid_table(&self.segment, self.root, &self.cache)?;
        let mut items = Vec::new();
        if !table.entries.is_empty() {
            if table.dim != self.query.len() {
                return Err(Error::DimensionMismatch {
                    column: String::new(),
                    expected: table.dim,
                    got: self.query.len(),
                });
            }
            for cell in probe_order(&table, &self.query, self.n_probe) {
                for entry in
                    read_posting(&self.segment, table.entries[cell].posting, table.dim, &self.cache)?
                {
                    items.push(ScoredItem {
                        distance: l2(&entry.vector, &self.query),
                        key: entry.key,
                        seqno: entry.seqno,
                        location: RowLocation::Disk(entry.handle),
                    });
                }
            }
        }
        items.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.key.cmp(&b.key)));
        self.opened = Some(items.into_iter());
        Ok(())
    }
}

impl crate::index::SortedDistanceIterator for SegmentVectorIter {
    fn next_item(&mut self) -> Result<Option<ScoredItem>> {
        self.open()?;
        match self.opened.as_mut().unwrap().next() {
            Some(item) => {
                self.last = Some(item.distance);
                Ok(Some(item))
            }
            None => Ok(None),
        }
    }

    fn last_emitted(&self) -> Option<f64> {
        self.last
    }
}
