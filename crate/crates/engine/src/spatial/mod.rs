//! Per-segment spatial index over point geometries: entries sorted by
//! z-order key with an exact best-first nearest-neighbor iterator and
//! z-interval range lookup.
//!
//! Root block: tag 2 | u8 non_empty | domain 4×f64 | MBR 4×f64 |
//! u32 n_children | per child [first_zkey u64 | u64 offset | u32 len].
//! Child block: u32 n | per entry [zkey u64 | x f64 | y f64 | key |
//! data handle (u64, u32) | u64 seqno | u32 ordinal], sorted by zkey.

pub mod morton;

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::index::{CandidateRow, RowLocation, ScoredItem, Summary, KIND_SPATIAL};
use crate::storage::block::DATA_BLOCK_TARGET;
use crate::storage::cache::BlockCache;
use crate::storage::codec::{self, Reader};
use crate::storage::segment::{Segment, SegmentBuilder};
use crate::storage::BlockHandle;
use crate::value::{GeometryValue, KeyValue};

pub use morton::{decode, encode, z_intervals, Domain};

pub const MAX_Z_INTERVALS: usize = 64;

#[derive(Debug, Clone)]
pub struct SpatialEntry {
    pub zkey: u64,
    pub x: f64,
    pub y: f64,
    pub key: KeyValue,
    pub handle: BlockHandle,
    pub seqno: u64,
    pub ordinal: u32,
}

/// Builds the region and returns the root handle, global summary, and how
/// many points fell outside the encoding domain (clamped with a warning
/// counter at the caller).
pub fn build(builder: &mut SegmentBuilder, column_idx: usize) -> Result<(BlockHandle, Summary, u64)> {
    let domain = Domain::default();
    let mut clamped = 0u64;
    let mut entries: Vec<SpatialEntry> = builder
        .indexable_rows()
        .iter()
        .filter(|ir| !ir.row.tombstone)
        .filter_map(|ir| {
            let (x, y) = ir.row.values.get(column_idx)?.as_point()?;
            let (zkey, was_clamped) = morton::encode(&domain, x, y);
            if was_clamped {
                clamped += 1;
            }
            Some(SpatialEntry {
                zkey,
                x,
                y,
                key: ir.row.key.clone(),
                handle: ir.handle,
                seqno: ir.row.seqno,
                ordinal: ir.ordinal,
            })
        })
        .collect();
    entries.sort_by(|a, b| a.zkey.cmp(&b.zkey).then_with(|| a.key.cmp(&b.key)));

    let mut mbr = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for e in &entries {
        mbr[0] = mbr[0].min(e.x);
        mbr[1] = mbr[1].min(e.y);
        mbr[2] = mbr[2].max(e.x);
        mbr[3] = mbr[3].max(e.y);
    }

    let mut children: Vec<(u64, BlockHandle)> = Vec::new();
    let per_block = (DATA_BLOCK_TARGET / 64).max(16);
    for chunk in entries.chunks(per_block) {
        let mut payload = Vec::new();
        codec::put_u32(&mut payload, chunk.len() as u32);
        for e in chunk {
            codec::put_u64(&mut payload, e.zkey);
            codec::put_f64(&mut payload, e.x);
            codec::put_f64(&mut payload, e.y);
            codec::put_key(&mut payload, &e.key);
            codec::put_u64(&mut payload, e.handle.offset);
            codec::put_u32(&mut payload, e.handle.length);
            codec::put_u64(&mut payload, e.seqno);
            codec::put_u32(&mut payload, e.ordinal);
        }
        children.push((chunk[0].zkey, builder.add_index_block(&payload)));
    }

    let mut root = Vec::new();
    root.push(KIND_SPATIAL);
    root.push(!entries.is_empty() as u8);
    codec::put_f64(&mut root, domain.x_min);
    codec::put_f64(&mut root, domain.y_min);
    codec::put_f64(&mut root, domain.x_max);
    codec::put_f64(&mut root, domain.y_max);
    for c in mbr {
        codec::put_f64(&mut root, c);
    }
    codec::put_u32(&mut root, children.len() as u32);
    for (first_zkey, handle) in &children {
        codec::put_u64(&mut root, *first_zkey);
        codec::put_u64(&mut root, handle.offset);
        codec::put_u32(&mut root, handle.length);
    }
    let summary = if entries.is_empty() {
        Summary::Empty
    } else {
        Summary::Rect { mbr }
    };
    Ok((builder.add_index_block(&root), summary, clamped))
}

pub fn read_summary(r: &mut Reader<'_>) -> Result<Summary> {
    if r.u8()? == 0 {
        return Ok(Summary::Empty);
    }
    for _ in 0..4 {
        r.f64()?; // domain
    }
    let mbr = [r.f64()?, r.f64()?, r.f64()?, r.f64()?];
    Ok(Summary::Rect { mbr })
}

struct SpatialRoot {
    domain: Domain,
    #[allow(dead_code)]
    mbr: [f64; 4],
    children: Vec<(u64, BlockHandle)>,
}

fn read_root(segment: &Segment, root: BlockHandle, cache: &BlockCache) -> Result<Option<SpatialRoot>> {
    let payload = segment.read_block(root, cache)?;
    let mut r = Reader::new(&payload);
    if r.u8()? != KIND_SPATIAL {
        return Err(Error::MalformedSegment("expected spatial root".into()));
    }
    if r.u8()? == 0 {
        return Ok(None);
    }
    let domain = Domain {
        x_min: r.f64()?,
        y_min: r.f64()?,
        x_max: r.f64()?,
        y_max: r.f64()?,
    };
    let mbr = [r.f64()?, r.f64()?, r.f64()?, r.f64()?];
    let n = r.u32()? as usize;
    let mut children = Vec::with_capacity(n);
    for _ in 0..n {
        let first = r.u64()?;
        let handle = BlockHandle::new(segment.id, r.u64()?, r.u32()?);
        children.push((first, handle));
    }
    Ok(Some(SpatialRoot { domain, mbr, children }))
}

fn read_child(segment: &Segment, handle: BlockHandle, cache: &BlockCache) -> Result<Vec<SpatialEntry>> {
    let payload = segment.read_block(handle, cache)?;
    let mut r = Reader::new(&payload);
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let zkey = r.u64()?;
        let x = r.f64()?;
        let y = r.f64()?;
        let key = codec::read_key(&mut r)?;
        let handle = BlockHandle::new(segment.id, r.u64()?, r.u32()?);
        let seqno = r.u64()?;
        let ordinal = r.u32()?;
        out.push(SpatialEntry {
            zkey,
            x,
            y,
            key,
            handle,
            seqno,
            ordinal,
        });
    }
    Ok(out)
}

/// Exact set of indexed rows whose point lies inside the query region.
/// Z-interval decomposition selects candidate blocks; the exact
/// point-in-region test runs on the stored coordinates.
pub fn range_filter(
    segment: &Segment,
    root: BlockHandle,
    region: &GeometryValue,
    cache: &BlockCache,
) -> Result<Vec<(u32, CandidateRow)>> {
    region.validate()?;
    if matches!(region, GeometryValue::Point(_)) {
        // a degenerate region still works: it contains exactly itself
    }
    let Some(root) = read_root(segment, root, cache)? else {
        return Ok(Vec::new());
    };
    let rect = region.bounding_rect();
    let (qx_lo, qy_lo, _) = root.domain.quantize(rect[0], rect[1]);
    let (qx_hi, qy_hi, _) = root.domain.quantize(rect[2], rect[3]);
    let intervals = z_intervals((qx_lo, qx_hi), (qy_lo, qy_hi), MAX_Z_INTERVALS);

    let mut out = Vec::new();
    for (block_idx, (first_zkey, handle)) in root.children.iter().enumerate() {
        let block_last = root
            .children
            .get(block_idx + 1)
            .map(|(next_first, _)| next_first.wrapping_sub(1))
            .unwrap_or(u64::MAX);
        let overlaps = intervals
            .iter()
            .any(|&(lo, hi)| lo <= block_last && hi >= *first_zkey);
        if !overlaps {
            continue;
        }
        for entry in read_child(segment, *handle, cache)? {
            let in_interval = intervals
                .binary_search_by(|&(lo, hi)| {
                    if entry.zkey < lo {
                        std::cmp::Ordering::Greater
                    } else if entry.zkey > hi {
                        std::cmp::Ordering::Less
                    } else {
                        std::cmp::Ordering::Equal
                    }
                })
                .is_ok();
            if in_interval && region.contains_point(entry.x, entry.y) {
                out.push((
                    entry.ordinal,
                    CandidateRow {
                        key: entry.key,
                        seqno: entry.seqno,
                        location: RowLocation::Disk(entry.handle),
                    },
                ));
            }
        }
    }
    Ok(out)
}

fn point_rect_dist(x: f64, y: f64, rect: &[f64; 4]) -> f64 {
    let dx = (rect[0] - x).max(0.0).max(x - rect[2]);
    let dy = (rect[1] - y).max(0.0).max(y - rect[3]);
    (dx * dx + dy * dy).sqrt()
}

pub fn euclid(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let dx = ax - bx;
    let dy = ay - by;
    (dx * dx + dy * dy).sqrt()
}

enum HeapItem {
    // (depth, qx prefix, qy prefix), entry range [lo, hi)
    Cell { depth: u32, qx: u32, qy: u32, lo: usize, hi: usize },
    Point { idx: usize },
}

struct Prioritized {
    bound: f64,
    tie: u64,
    item: HeapItem,
}

impl PartialEq for Prioritized {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.tie == other.tie
    }
}
impl Eq for Prioritized {}
impl PartialOrd for Prioritized {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Prioritized {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| self.tie.cmp(&other.tie))
    }
}

/// Best-first exact nearest-neighbor iterator over one segment: quadtree
/// cells over the z-sorted entry array, with the L2 distance from the query
/// to the cell rectangle as the lower bound (0 when inside).
pub struct SegmentSpatialIter {
    segment: Arc<Segment>,
    root: BlockHandle,
    cache: Arc<BlockCache>,
    query: (f64, f64),
    state: Option<IterState>,
    last: Option<f64>,
}

struct IterState {
    domain: Domain,
    entries: Vec<SpatialEntry>,
    heap: BinaryHeap<Reverse<Prioritized>>,
    next_tie: u64,
    /// entries with clamped/out-of-domain points fall back to exact order
    exact_fallback: Option<std::vec::IntoIter<usize>>,
}

const CELL_LEAF_SIZE: usize = 16;

impl SegmentSpatialIter {
    pub fn new(segment: Arc<Segment>, root: BlockHandle, query: (f64, f64), cache: Arc<BlockCache>) -> Self {
        SegmentSpatialIter {
            segment,
            root,
            cache,
            query,
            state: None,
            last: None,
        }
    }

    fn open(&mut self) -> Result<()> {
        if self.state.is_some() {
            return Ok(());
        }
        let Some(root) = read_root(&self.segment, self.root, &self.cache)? else {
            self.state = Some(IterState {
                domain: Domain::default(),
                entries: Vec::new(),
                heap: BinaryHeap::new(),
                next_tie: 0,
                exact_fallback: None,
            });
            return Ok(());
        };
        let mut entries = Vec::new();
        for (_, handle) in &root.children {
            entries.extend(read_child(&self.segment, *handle, &self.cache)?);
        }
        let out_of_domain = entries.iter().any(|e| {
            e.x < root.domain.x_min
                || e.x > root.domain.x_max
                || e.y < root.domain.y_min
                || e.y > root.domain.y_max
        });
        let mut state = IterState {
            domain: root.domain,
            entries,
            heap: BinaryHeap::new(),
            next_tie: 0,
            exact_fallback: None,
        };
        if out_of_domain {
            // cell bounds are invalid for clamped points; sort exactly instead
            let mut order: Vec<usize> = (0..state.entries.len()).collect();
            let q = self.query;
            order.sort_by(|&a, &b| {
                let ea = &state.entries[a];
                let eb = &state.entries[b];
                euclid(ea.x, ea.y, q.0, q.1)
                    .total_cmp(&euclid(eb.x, eb.y, q.0, q.1))
                    .then_with(|| ea.key.cmp(&eb.key))
            });
            state.exact_fallback = Some(order.into_iter());
        } else if !state.entries.is_empty() {
            let n = state.entries.len();
            state.push_cell(0, 0, 0, 0, n, self.query);
        }
        self.state = Some(state);
        Ok(())
    }
}

impl IterState {
    fn cell_rect(&self, depth: u32, qx: u32, qy: u32) -> [f64; 4] {
        if depth == 0 {
            return [self.domain.x_min, self.domain.y_min, self.domain.x_max, self.domain.y_max];
        }
        let span = 1u64 << (32 - depth);
        let (cx, cy) = self.domain.cell_size();
        let x_lo = self.domain.x_min + (qx as u64 * span) as f64 * cx;
        let y_lo = self.domain.y_min + (qy as u64 * span) as f64 * cy;
        [x_lo, y_lo, x_lo + span as f64 * cx, y_lo + span as f64 * cy]
    }

    fn push_cell(&mut self, depth: u32, qx: u32, qy: u32, lo: usize, hi: usize, q: (f64, f64)) {
        if lo >= hi {
            return;
        }
        let rect = self.cell_rect(depth, qx, qy);
        // pad slightly so float rounding can never push the bound above a
        // member's true distance
        let bound = (point_rect_dist(q.0, q.1, &rect) - 1e-9).max(0.0);
        let tie = self.next_tie;
        self.next_tie += 1;
        self.heap.push(Reverse(Prioritized {
            bound,
            tie,
            item: HeapItem::Cell { depth, qx, qy, lo, hi },
        }));
    }

    fn push_point(&mut self, idx: usize, q: (f64, f64)) {
        let e = &self.entries[idx];
        let bound = euclid(e.x, e.y, q.0, q.1);
        let tie = self.next_tie;
        self.next_tie += 1;
        self.heap.push(Reverse(Prioritized {
            bound,
            tie,
            item: HeapItem::Point { idx },
        }));
    }
}

impl crate::index::SortedDistanceIterator for SegmentSpatialIter {
    fn next_item(&mut self) -> Result<Option<ScoredItem>> {
        self.open()?;
        let q = self.query;
        let state = self.state.as_mut().unwrap();
        if let Some(fallback) = &mut state.exact_fallback {
            if let Some(idx) = fallback.next() {
                let e = &state.entries[idx];
                let distance = euclid(e.x, e.y, q.0, q.1);
                self.last = Some(distance);
                return Ok(Some(ScoredItem {
                    key: e.key.clone(),
                    seqno: e.seqno,
                    distance,
                    location: RowLocation::Disk(e.handle),
                }));
            }
            return Ok(None);
        }
        while let Some(Reverse(top)) = state.heap.pop() {
            match top.item {
                HeapItem::Point { idx } => {
                    let e = &state.entries[idx];
                    let distance = euclid(e.x, e.y, q.0, q.1);
                    self.last = Some(distance);
                    return Ok(Some(ScoredItem {
                        key: e.key.clone(),
                        seqno: e.seqno,
                        distance,
                        location: RowLocation::Disk(e.handle),
                    }));
                }
                HeapItem::Cell { depth, qx, qy, lo, hi } => {
                    if hi - lo <= CELL_LEAF_SIZE || depth == 32 {
                        for idx in lo..hi {
                            state.push_point(idx, q);
                        }
                        continue;
                    }
                    // split into the 4 z-order quadrants: contiguous zkey
                    // subranges found by binary search
                    let child_depth = depth + 1;
                    let shift = 64 - 2 * child_depth as u64;
                    for child in 0..4u32 {
                        let cqx = (qx << 1) | (child & 1);
                        let cqy = (qy << 1) | (child >> 1);
                        let prefix = morton::interleave(cqx << (32 - child_depth), cqy << (32 - child_depth));
                        let z_lo = prefix;
                        let z_hi = if shift == 0 { prefix } else { prefix | ((1u64 << shift) - 1) };
                        let start = lo + state.entries[lo..hi].partition_point(|e| e.zkey < z_lo);
                        let end = lo + state.entries[lo..hi].partition_point(|e| e.zkey <= z_hi);
                        state.push_cell(child_depth, cqx, cqy, start, end, q);
                    }
                }
            }
        }
        Ok(None)
    }

    fn last_emitted(&self) -> Option<f64> {
        self.last
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::SortedDistanceIterator;
    use crate::value::{AttributeValue, Row};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn make_segment(points: &[(f64, f64)]) -> (tempfile::TempDir, Arc<Segment>, BlockHandle) {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<Row> = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Row {
                key: KeyValue::Int(i as i64),
                seqno: i as u64 + 1,
                tombstone: false,
                values: vec![
                    AttributeValue::Int(i as i64),
                    AttributeValue::Geometry(GeometryValue::point(x, y)),
                ],
            })
            .collect();
        let mut builder = SegmentBuilder::new(21, 0);
        builder.add_rows(&rows).unwrap();
        let (root, _, _) = build(&mut builder, 1).unwrap();
        builder.set_index_region("loc", root);
        let seg = builder.finish(dir.path()).unwrap();
        let root = seg.index_regions["loc"];
        (dir, seg, root)
    }

    fn random_points(n: usize, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                (
                    rng.random::<f64>() * 360.0 - 180.0,
                    rng.random::<f64>() * 180.0 - 90.0,
                )
            })
            .collect()
    }

    #[test]
    fn range_filter_matches_naive_on_500_random_queries() {
        let points = random_points(10_000, 31);
        let (_dir, seg, root) = make_segment(&points);
        let cache = BlockCache::new(16 << 20);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for trial in 0..500 {
            let x0 = rng.random::<f64>() * 360.0 - 180.0;
            let y0 = rng.random::<f64>() * 180.0 - 90.0;
            let w = rng.random::<f64>() * 80.0;
            let h = rng.random::<f64>() * 40.0;
            let region = if trial % 2 == 0 {
                GeometryValue::rect(x0, y0, (x0 + w).min(180.0), (y0 + h).min(90.0))
            } else {
                // a triangle inside the same window
                GeometryValue::Polygon(vec![
                    [x0, y0],
                    [(x0 + w).min(180.0), y0],
                    [x0 + w / 2.0, (y0 + h).min(90.0)],
                ])
            };
            if region.validate().is_err() {
                continue;
            }
            let got: std::collections::HashSet<i64> = range_filter(&seg, root, &region, &cache)
                .unwrap()
                .into_iter()
                .map(|(_, c)| c.key.as_int().unwrap())
                .collect();
            let want: std::collections::HashSet<i64> = points
                .iter()
                .enumerate()
                .filter(|(_, &(x, y))| region.contains_point(x, y))
                .map(|(i, _)| i as i64)
                .collect();
            assert_eq!(got, want, "trial {trial}");
        }
    }

    #[test]
    fn range_filter_matches_naive_on_polygons() {
        let points = random_points(1500, 33);
        let (_dir, seg, root) = make_segment(&points);
        let cache = BlockCache::new(4 << 20);
        let poly = GeometryValue::Polygon(vec![
            [-60.0, -30.0],
            [60.0, -45.0],
            [80.0, 40.0],
            [0.0, 60.0],
            [-70.0, 20.0],
        ]);
        let got: std::collections::HashSet<i64> = range_filter(&seg, root, &poly, &cache)
            .unwrap()
            .into_iter()
            .map(|(_, c)| c.key.as_int().unwrap())
            .collect();
        let want: std::collections::HashSet<i64> = points
            .iter()
            .enumerate()
            .filter(|(_, &(x, y))| poly.contains_point(x, y))
            .map(|(i, _)| i as i64)
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn degenerate_point_region_finds_stored_point() {
        let points = vec![(10.0, 20.0), (30.0, 40.0)];
        let (_dir, seg, root) = make_segment(&points);
        let cache = BlockCache::new(1 << 20);
        let got = range_filter(&seg, root, &GeometryValue::rect(10.0, 20.0, 10.0, 20.0), &cache).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].1.key, KeyValue::Int(0));
    }

    #[test]
    fn nn_iterator_exact_order_full_exhaustion() {
        let points = random_points(800, 34);
        let (_dir, seg, root) = make_segment(&points);
        let cache = Arc::new(BlockCache::new(4 << 20));
        let q = (13.7, -42.1);
        let mut iter = SegmentSpatialIter::new(seg, root, q, cache);
        let mut got = Vec::new();
        while let Some(item) = iter.next_item().unwrap() {
            got.push((item.key.as_int().unwrap(), item.distance));
        }
        assert_eq!(got.len(), points.len());
        let mut want: Vec<(i64, f64)> = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| (i as i64, euclid(x, y, q.0, q.1)))
            .collect();
        want.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        // same order modulo exact ties
        for (g, w) in got.iter().zip(&want) {
            assert!((g.1 - w.1).abs() < 1e-12);
        }
        assert!(got.windows(2).all(|w| w[0].1 <= w[1].1));
        // first yield is the true nearest neighbor
        assert_eq!(got[0].0, want[0].0);
    }

    #[test]
    fn query_at_stored_point_yields_zero_first() {
        let points = vec![(5.0, 5.0), (50.0, 50.0), (-170.0, 80.0)];
        let (_dir, seg, root) = make_segment(&points);
        let cache = Arc::new(BlockCache::new(1 << 20));
        let mut iter = SegmentSpatialIter::new(seg, root, (5.0, 5.0), cache);
        let first = iter.next_item().unwrap().unwrap();
        assert_eq!(first.distance, 0.0);
        assert_eq!(first.key, KeyValue::Int(0));
    }
}
