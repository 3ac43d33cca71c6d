//! Per-segment scalar index: sorted (value, row) entries in leaf blocks with
//! a root directory for binary-searched range lookups.
//!
//! Root block: tag 0 | u8 non_empty | min value | max value | u32 n_leaves |
//! per leaf [first value | u64 offset | u32 len].
//! Leaf block: u32 n | per entry [value | u32 ordinal | key | u64 offset |
//! u32 len | u64 seqno] sorted by (value, key, seqno).

use crate::error::Result;
use crate::index::{CandidateRow, RowLocation, ScalarKey, Summary, KIND_BTREE};
use crate::storage::block::DATA_BLOCK_TARGET;
use crate::storage::cache::BlockCache;
use crate::storage::codec::{self, Reader};
use crate::storage::segment::{Segment, SegmentBuilder};
use crate::storage::BlockHandle;
use crate::value::{AttributeValue, KeyValue};

fn put_scalar(buf: &mut Vec<u8>, v: &ScalarKey) {
    match v {
        ScalarKey::Int(i) => codec::put_value(buf, &AttributeValue::Int(*i)),
        ScalarKey::Float(f) => codec::put_value(buf, &AttributeValue::Float(*f)),
        ScalarKey::Str(s) => codec::put_value(buf, &AttributeValue::Str(s.clone())),
    }
}

fn read_scalar(r: &mut Reader<'_>) -> Result<ScalarKey> {
    let v = codec::read_value(r)?;
    Ok(ScalarKey::from_value(&v).expect("scalar value in btree block"))
}

pub fn build(builder: &mut SegmentBuilder, column_idx: usize) -> Result<(BlockHandle, Summary)> {
    let mut entries: Vec<(ScalarKey, u32, KeyValue, BlockHandle, u64)> = builder
        .indexable_rows()
        .iter()
        .filter(|ir| !ir.row.tombstone)
        .filter_map(|ir| {
            ScalarKey::from_value(ir.row.values.get(column_idx)?)
                .map(|v| (v, ir.ordinal, ir.row.key.clone(), ir.handle, ir.row.seqno))
        })
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.2.cmp(&b.2)).then(a.4.cmp(&b.4)));

    let summary = if entries.is_empty() {
        Summary::Empty
    } else {
        Summary::Scalar {
            min: entries.first().unwrap().0.clone(),
            max: entries.last().unwrap().0.clone(),
        }
    };

    let mut leaves: Vec<(ScalarKey, BlockHandle)> = Vec::new();
    let mut payload = Vec::new();
    let mut first: Option<ScalarKey> = None;
    let mut count = 0u32;
    let flush_leaf = |payload: &mut Vec<u8>,
                          first: &mut Option<ScalarKey>,
                          count: &mut u32,
                          leaves: &mut Vec<(ScalarKey, BlockHandle)>,
                          builder: &mut SegmentBuilder| {
        if *count == 0 {
            return;
        }
        let mut block = Vec::with_capacity(payload.len() + 4);
        codec::put_u32(&mut block, *count);
        block.extend_from_slice(payload);
        let handle = builder.add_index_block(&block);
        leaves.push((first.take().unwrap(), handle));
        payload.clear();
        *count = 0;
    };
    for (value, ordinal, key, handle, seqno) in &entries {
        if first.is_none() {
            first = Some(value.clone());
        }
        put_scalar(&mut payload, value);
        codec::put_u32(&mut payload, *ordinal);
        codec::put_key(&mut payload, key);
        codec::put_u64(&mut payload, handle.offset);
        codec::put_u32(&mut payload, handle.length);
        codec::put_u64(&mut payload, *seqno);
        count += 1;
        if payload.len() >= DATA_BLOCK_TARGET {
            flush_leaf(&mut payload, &mut first, &mut count, &mut leaves, builder);
        }
    }
    flush_leaf(&mut payload, &mut first, &mut count, &mut leaves, builder);

    let mut root = Vec::new();
    root.push(KIND_BTREE);
    root.push(!entries.is_empty() as u8);
    if let Summary::Scalar { min, max } = &summary {
        put_scalar(&mut root, min);
        put_scalar(&mut root, max);
    }
    codec::put_u32(&mut root, leaves.len() as u32);
    for (first_value, handle) in &leaves {
        put_scalar(&mut root, first_value);
        codec::put_u64(&mut root, handle.offset);
        codec::put_u32(&mut root, handle.length);
    }
    Ok((builder.add_index_block(&root), summary))
}

pub fn read_summary(r: &mut Reader<'_>) -> Result<Summary> {
    if r.u8()? == 0 {
        return Ok(Summary::Empty);
    }
    let min = read_scalar(r)?;
    let max = read_scalar(r)?;
    Ok(Summary::Scalar { min, max })
}

/// Range lookup over one segment. Bounds are inclusive; `None` is unbounded.
/// Returns matching entries plus the number of index blocks it read.
pub fn lookup(
    segment: &Segment,
    root: BlockHandle,
    lo: Option<&ScalarKey>,
    hi: Option<&ScalarKey>,
    cache: &BlockCache,
) -> Result<Vec<(u32, CandidateRow, ScalarKey)>> {
    let payload = segment.read_block(root, cache)?;
    let mut r = Reader::new(&payload);
    if r.u8()? != KIND_BTREE {
        return Err(crate::error::Error::MalformedSegment("expected btree root".into()));
    }
    if r.u8()? == 0 {
        return Ok(Vec::new());
    }
    let _min = read_scalar(&mut r)?;
    let _max = read_scalar(&mut r)?;
    let n_leaves = r.u32()? as usize;
    let mut leaves = Vec::with_capacity(n_leaves);
    for _ in 0..n_leaves {
        let first = read_scalar(&mut r)?;
        let handle = BlockHandle::new(segment.id, r.u64()?, r.u32()?);
        leaves.push((first, handle));
    }

    // first leaf that might contain lo: the last one whose first value is
    // strictly below it (duplicates of lo can span a leaf boundary)
    let start = match lo {
        Some(lo) => leaves.partition_point(|(first, _)| first < lo).saturating_sub(1),
        None => 0,
    };
    let mut out = Vec::new();
    for (first, handle) in &leaves[start..] {
        if let Some(hi) = hi {
            if first > hi {
                break;
            }
        }
        let leaf = segment.read_block(*handle, cache)?;
        let mut lr = Reader::new(&leaf);
        let n = lr.u32()? as usize;
        for _ in 0..n {
            let value = read_scalar(&mut lr)?;
            let ordinal = lr.u32()?;
            let key = codec::read_key(&mut lr)?;
            let handle = BlockHandle::new(segment.id, lr.u64()?, lr.u32()?);
            let seqno = lr.u64()?;
            let ge_lo = lo.map(|l| &value >= l).unwrap_or(true);
            let le_hi = hi.map(|h| &value <= h).unwrap_or(true);
            if ge_lo && le_hi {
                out.push((
                    ordinal,
                    CandidateRow {
                        key,
                        seqno,
                        location: RowLocation::Disk(handle),
                    },
                    value,
                ));
            }
        }
    }
    Ok(out)
}
