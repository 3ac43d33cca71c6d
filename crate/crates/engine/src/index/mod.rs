//! Unified two-level secondary index framework.
//!
//! Per-segment index components are immutable block trees inside segment
//! files (built at flush/compaction); the in-memory global index maps
//! per-segment summaries to index roots for segment pruning. All modalities
//! expose the same sorted-distance iterator contract so top-k aggregation
//! can merge them uniformly.
//!
//! Every per-segment index root block begins with a one-byte kind tag:
//! 0=btree, 1=ivf, 2=spatial, 3=inverted.

pub mod bloom;
pub mod btree;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::schema::{IndexKind, TableSchema};
use crate::storage::cache::BlockCache;
use crate::storage::codec::Reader;
use crate::storage::segment::{Segment, SegmentBuilder};
use crate::storage::BlockHandle;
use crate::value::KeyValue;

pub use bloom::Bloom;

pub const KIND_BTREE: u8 = 0;
pub const KIND_IVF: u8 = 1;
pub const KIND_SPATIAL: u8 = 2;
pub const KIND_INVERTED: u8 = 3;

/// Where a row version lives. Memtable rows have no block address yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowLocation {
    Disk(BlockHandle),
    Memtable,
}

/// One yield of a sorted-distance source.
#[derive(Debug, Clone)]
pub struct ScoredItem {
    pub key: KeyValue,
    pub seqno: u64,
    pub distance: f64,
    pub location: RowLocation,
}

/// The standardized contract shared by all index modalities: yields
/// `(object, distance)` pairs in non-decreasing distance order, each object
/// at most once per iterator. `last_emitted` is the iterator threshold τ.
pub trait SortedDistanceIterator: Send {
    fn next_item(&mut self) -> Result<Option<ScoredItem>>;
    fn last_emitted(&self) -> Option<f64>;
}

/// Sorted source over a pre-materialized list (memtable overlays, tests).
pub struct VecDistanceIterator {
    items: std::vec::IntoIter<ScoredItem>,
    last: Option<f64>,
}

impl VecDistanceIterator {
    /// Items are sorted by (distance, key) here; callers may pass unsorted.
    pub fn new(mut items: Vec<ScoredItem>) -> Self {
        items.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then_with(|| a.key.cmp(&b.key))
        });
        VecDistanceIterator {
            items: items.into_iter(),
            last: None,
        }
    }
}

impl SortedDistanceIterator for VecDistanceIterator {
    fn next_item(&mut self) -> Result<Option<ScoredItem>> {
        match self.items.next() {
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

/// Visibility oracle: is (key, seqno) the newest visible version?
pub type VisingFn<'a> = dyn Fn(&KeyValue, u64) -> Result<bool> + Send + 'a;

/// Priority-queue merge of sorted sources. Duplicate keys are emitted once;
/// with a visibility oracle attached, the newest visible version wins even
/// when a stale version sorts earlier.
pub struct MergedDistanceIterator<'a> {
    sources: Vec<Box<dyn SortedDistanceIterator + 'a>>,
    heap: std::collections::BinaryHeap<HeapEntry>,
    emitted: HashSet<KeyValue>,
    visibility: Option<Box<VisingFn<'a>>>,
    last: Option<f64>,
}

struct HeapEntry {
    item: ScoredItem,
    source: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.item.distance == other.item.distance && self.item.key == other.item.key
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // BinaryHeap is a max-heap; invert for smallest-distance-first.
        other
            .item
            .distance
            .total_cmp(&self.item.distance)
            .then_with(|| other.item.key.cmp(&self.item.key))
            .then_with(|| other.item.seqno.cmp(&self.item.seqno))
    }
}

impl<'a> MergedDistanceIterator<'a> {
    pub fn new(
        sources: Vec<Box<dyn SortedDistanceIterator + 'a>>,
        visibility: Option<Box<VisingFn<'a>>>,
    ) -> Result<Self> {
        let mut merged = MergedDistanceIterator {
            sources,
            heap: std::collections::BinaryHeap::new(),
            emitted: HashSet::new(),
            visibility,
            last: None,
        };
        for idx in 0..merged.sources.len() {
            merged.advance(idx)?;
        }
        Ok(merged)
    }

    fn advance(&mut self, source: usize) -> Result<()> {
        if let Some(item) = self.sources[source].next_item()? {
            self.heap.push(HeapEntry { item, source });
        }
        Ok(())
    }
}

impl SortedDistanceIterator for MergedDistanceIterator<'_> {
    fn next_item(&mut self) -> Result<Option<ScoredItem>> {
        while let Some(entry) = self.heap.pop() {
            self.advance(entry.source)?;
            if self.emitted.contains(&entry.item.key) {
                continue;
            }
            if let Some(vis) = &self.visibility {
                if !vis(&entry.item.key, entry.item.seqno)? {
                    continue;
                }
            }
            self.emitted.insert(entry.item.key.clone());
            self.last = Some(entry.item.distance);
            return Ok(Some(entry.item));
        }
        Ok(None)
    }

    fn last_emitted(&self) -> Option<f64> {
        self.last
    }
}

impl MergedDistanceIterator<'_> {
    /// Visibility is enforced by the merge; sources yield raw versions.
    pub fn merge(
        sources: Vec<Box<dyn SortedDistanceIterator + '_>>,
    ) -> Result<MergedDistanceIterator<'_>> {
        MergedDistanceIterator::new(sources, None)
    }
}

/// One candidate row produced by an index lookup.
#[derive(Debug, Clone)]
pub struct CandidateRow {
    pub key: KeyValue,
    pub seqno: u64,
    pub location: RowLocation,
}

/// Positions of rows surviving index lookups: packed 64-bit
/// (segment ordinal << 32 | row ordinal), kept sorted and unique.
#[derive(Debug, Clone, Default)]
pub struct CandidateSet {
    positions: Vec<u64>,
    rows: HashMap<u64, CandidateRow>,
}

/// Stable per-query mapping from segment id to a 32-bit ordinal.
#[derive(Debug, Clone, Default)]
pub struct SegmentOrdinals {
    by_id: BTreeMap<u64, u32>,
}

impl SegmentOrdinals {
    pub fn new(segments: &[Arc<Segment>]) -> Self {
        let mut ids: Vec<u64> = segments.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        SegmentOrdinals {
            by_id: ids.into_iter().enumerate().map(|(i, id)| (id, i as u32)).collect(),
        }
    }

    pub fn pack(&self, segment_id: u64, row_ordinal: u32) -> u64 {
        let seg = *self.by_id.get(&segment_id).expect("segment in snapshot");
        ((seg as u64) << 32) | row_ordinal as u64
    }
}

impl CandidateSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, position: u64, row: CandidateRow) {
        if self.rows.insert(position, row).is_none() {
            self.positions.push(position);
        }
    }

    pub fn seal(&mut self) {
        self.positions.sort_unstable();
        self.positions.dedup();
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&u64, &CandidateRow)> {
        self.positions.iter().map(move |p| (p, &self.rows[p]))
    }

    pub fn contains_key(&self, key: &KeyValue) -> bool {
        self.rows.values().any(|r| &r.key == key)
    }

    pub fn intersect(&self, other: &CandidateSet) -> CandidateSet {
        let (small, large) = if self.positions.len() <= other.positions.len() {
            (self, other)
        } else {
            (other, self)
        };
        let large_set: HashSet<u64> = large.positions.iter().copied().collect();
        let mut out = CandidateSet::new();
        for pos in &small.positions {
            if large_set.contains(pos) {
                out.insert(*pos, small.rows[pos].clone());
            }
        }
        out.seal();
        out
    }

    pub fn union(&self, other: &CandidateSet) -> CandidateSet {
        let mut out = self.clone();
        for (pos, row) in other.iter() {
            out.insert(*pos, row.clone());
        }
        out.seal();
        out
    }
}

/// Per-segment summary of one indexed column, held in the global index.
#[derive(Debug, Clone)]
pub enum Summary {
    Scalar { min: ScalarKey, max: ScalarKey },
    Rect { mbr: [f64; 4] },
    Centroids { centroids: Vec<Vec<f32>> },
    TermBloom { bloom: Bloom },
    /// Indexed column with zero indexed rows.
    Empty,
}

/// Orderable scalar used by btree index entries and summaries.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarKey {
    Int(i64),
    Float(f64),
    Str(String),
}

impl ScalarKey {
    pub fn from_value(value: &crate::value::AttributeValue) -> Option<ScalarKey> {
        match value {
            crate::value::AttributeValue::Int(v) => Some(ScalarKey::Int(*v)),
            crate::value::AttributeValue::Float(v) => Some(ScalarKey::Float(*v)),
            crate::value::AttributeValue::Str(s) => Some(ScalarKey::Str(s.clone())),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ScalarKey::Int(v) => Some(*v as f64),
            ScalarKey::Float(v) => Some(*v),
            ScalarKey::Str(_) => None,
        }
    }
}

impl Eq for ScalarKey {}

impl PartialOrd for ScalarKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ScalarKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use ScalarKey::*;
        match (self, other) {
            (Int(a), Int(b)) => a.cmp(b),
            (Str(a), Str(b)) => a.cmp(b),
            (Int(a), Float(b)) => (*a as f64).total_cmp(b),
            (Float(a), Int(b)) => a.total_cmp(&(*b as f64)),
            (Float(a), Float(b)) => a.total_cmp(b),
            // strings sort after numerics; mixed kinds never share a column
            (Str(_), _) => std::cmp::Ordering::Greater,
            (_, Str(_)) => std::cmp::Ordering::Less,
        }
    }
}

/// Query-side summary probed against segment summaries during pruning.
#[derive(Debug, Clone)]
pub enum QuerySummary {
    Range {
        lo: Option<ScalarKey>,
        hi: Option<ScalarKey>,
    },
    Rect {
        rect: [f64; 4],
    },
    /// Vector probes keep every segment: centroid summaries alone give no
    /// sound distance bound, so pruning would risk false negatives.
    Vector,
    Term {
        term: String,
    },
    All,
}

fn summary_overlaps(summary: &Summary, query: &QuerySummary) -> bool {
    match (summary, query) {
        (Summary::Empty, _) => false,
        (_, QuerySummary::All) => true,
        (Summary::Scalar { min, max }, QuerySummary::Range { lo, hi }) => {
            let lo_ok = hi.as_ref().map(|h| min <= h).unwrap_or(true);
            let hi_ok = lo.as_ref().map(|l| max >= l).unwrap_or(true);
            lo_ok && hi_ok
        }
        (Summary::Rect { mbr }, QuerySummary::Rect { rect }) => {
            mbr[0] <= rect[2] && rect[0] <= mbr[2] && mbr[1] <= rect[3] && rect[1] <= mbr[3]
        }
        (Summary::Centroids { .. }, QuerySummary::Vector) => true,
        (Summary::TermBloom { bloom }, QuerySummary::Term { term }) => bloom.contains(term),
        // mismatched kinds: keep the segment (superset guarantee)
        _ => true,
    }
}

#[derive(Debug, Clone)]
pub struct GlobalEntry {
    pub segment_id: u64,
    pub root: BlockHandle,
    pub summary: Summary,
}

pub type SegmentSummaries = BTreeMap<String, (BlockHandle, Summary)>;

/// In-memory global index: per indexed column, an ordered map of per-segment
/// summaries to index roots. Rebuildable from segment footers; lookups
/// return a superset of the segments containing matches (no false
/// negatives).
#[derive(Debug, Clone, Default)]
pub struct GlobalIndex {
    columns: BTreeMap<String, BTreeMap<u64, GlobalEntry>>,
}

impl GlobalIndex {
    pub fn insert(&mut self, segment: &Segment, summaries: SegmentSummaries) {
        for (column, (root, summary)) in summaries {
            self.columns.entry(column).or_default().insert(
                segment.id,
                GlobalEntry {
                    segment_id: segment.id,
                    root,
                    summary,
                },
            );
        }
    }

    pub fn remove(&mut self, segment_id: u64) {
        for entries in self.columns.values_mut() {
            entries.remove(&segment_id);
        }
        self.columns.retain(|_, entries| !entries.is_empty());
    }

    /// Segments whose summary overlaps the query summary, with index roots.
    pub fn prune(&self, column: &str, query: &QuerySummary) -> Vec<(u64, BlockHandle)> {
        let Some(entries) = self.columns.get(column) else {
            return Vec::new();
        };
        entries
            .values()
            .filter(|e| summary_overlaps(&e.summary, query))
            .map(|e| (e.segment_id, e.root))
            .collect()
    }

    pub fn segment_entry(&self, column: &str, segment_id: u64) -> Option<&GlobalEntry> {
        self.columns.get(column)?.get(&segment_id)
    }

    pub fn indexed_columns(&self) -> Vec<&str> {
        self.columns.keys().map(|s| s.as_str()).collect()
    }
}

/// Build every declared index region for a segment under construction.
/// Dispatches to the per-modality builders; a builder failure aborts the
/// whole segment build.
pub fn build_segment_indexes(
    builder: &mut SegmentBuilder,
    schema: &TableSchema,
    metrics: &crate::storage::cache::CacheMetrics,
) -> Result<SegmentSummaries> {
    let mut summaries = SegmentSummaries::new();
    for spec in &schema.index_specs {
        let column_idx = schema
            .column_index(&spec.column)
            .ok_or_else(|| Error::UnknownColumn(spec.column.clone()))?;
        let (root, summary) = match spec.kind {
            IndexKind::Btree => btree::build(builder, column_idx)?,
            IndexKind::Ivf { n_centroids } => {
                crate::vector::build_ivf(builder, column_idx, n_centroids)?
            }
            IndexKind::Spatial => {
                let (root, summary, clamped) = crate::spatial::build(builder, column_idx)?;
                if clamped > 0 {
                    metrics.spatial_clamps.fetch_add(clamped, std::sync::atomic::Ordering::SeqCst);
                }
                (root, summary)
            }
            IndexKind::Inverted => crate::text::build(builder, column_idx)?,
        };
        builder.set_index_region(&spec.column, root);
        summaries.insert(spec.column.clone(), (root, summary));
    }
    Ok(summaries)
}

/// Re-derive per-column summaries from segment index roots (startup rebuild
/// path: the global index is a pure cache of per-segment summaries).
pub fn read_segment_summaries(
    segment: &Segment,
    schema: &TableSchema,
    cache: &BlockCache,
) -> Result<SegmentSummaries> {
    let mut summaries = SegmentSummaries::new();
    for (column, root) in &segment.index_regions {
        let payload = segment.read_block(*root, cache)?;
        let mut r = Reader::new(&payload);
        let summary = match r.u8()? {
            KIND_BTREE => btree::read_summary(&mut r)?,
            KIND_IVF => crate::vector::read_summary(&mut r)?,
            KIND_SPATIAL => crate::spatial::read_summary(&mut r)?,
            KIND_INVERTED => crate::text::read_summary(&mut r)?,
            t => {
                return Err(Error::MalformedSegment(format!(
                    "unknown index kind tag {t} for column {column}"
                )))
            }
        };
        let _ = schema; // schema currently unused beyond validation at open
        summaries.insert(column.clone(), (*root, summary));
    }
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::KeyValue;
    use proptest::prelude::*;

    fn item(key: i64, distance: f64) -> ScoredItem {
        ScoredItem {
            key: KeyValue::Int(key),
            seqno: key as u64,
            distance,
            location: RowLocation::Memtable,
        }
    }

    fn drain(mut it: impl SortedDistanceIterator) -> Vec<(i64, f64)> {
        let mut out = Vec::new();
        while let Some(i) = it.next_item().unwrap() {
            out.push((i.key.as_int().unwrap(), i.distance));
        }
        out
    }

    #[test]
    fn merge_interleaves_in_distance_order() {
        let a = VecDistanceIterator::new(vec![item(1, 1.0), item(3, 3.0), item(5, 5.0)]);
        let b = VecDistanceIterator::new(vec![item(2, 2.0), item(4, 4.0)]);
        let merged = MergedDistanceIterator::merge(vec![Box::new(a), Box::new(b)]).unwrap();
        assert_eq!(
            drain(merged),
            vec![(1, 1.0), (2, 2.0), (3, 3.0), (4, 4.0), (5, 5.0)]
        );
    }

    #[test]
    fn merge_single_source_is_identity() {
        let a = VecDistanceIterator::new(vec![item(1, 0.5), item(2, 0.7)]);
        let merged = MergedDistanceIterator::merge(vec![Box::new(a)]).unwrap();
        assert_eq!(drain(merged), vec![(1, 0.5), (2, 0.7)]);
    }

    #[test]
    fn merge_dedups_keeping_newest_visible() {
        // key 7 exists twice: stale seqno 1 at distance 0.1, fresh seqno 9 at 0.9
        let old = VecDistanceIterator::new(vec![ScoredItem {
            key: KeyValue::Int(7),
            seqno: 1,
            distance: 0.1,
            location: RowLocation::Memtable,
        }]);
        let new = VecDistanceIterator::new(vec![ScoredItem {
            key: KeyValue::Int(7),
            seqno: 9,
            distance: 0.9,
            location: RowLocation::Memtable,
        }]);
        let vis: Box<VisingFn> = Box::new(|_, seqno| Ok(seqno == 9));
        let mut merged =
            MergedDistanceIterator::new(vec![Box::new(old), Box::new(new)], Some(vis)).unwrap();
        let first = merged.next_item().unwrap().unwrap();
        assert_eq!(first.seqno, 9);
        assert!(merged.next_item().unwrap().is_none());
    }

    #[test]
    fn candidate_set_algebra_matches_naive_sets_on_1000_pairs() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let make = |positions: &[u64]| {
            let mut set = CandidateSet::new();
            for &p in positions {
                set.insert(
                    p,
                    CandidateRow {
                        key: KeyValue::Int(p as i64),
                        seqno: 1,
                        location: RowLocation::Memtable,
                    },
                );
            }
            set.seal();
            set
        };
        for _ in 0..1000 {
            let n_a = rng.random_range(0..200usize);
            let n_b = rng.random_range(0..200usize);
            let a_pos: Vec<u64> = (0..n_a).map(|_| rng.random_range(0..256u64)).collect();
            let b_pos: Vec<u64> = (0..n_b).map(|_| rng.random_range(0..256u64)).collect();
            let a = make(&a_pos);
            let b = make(&b_pos);
            let naive_a: HashSet<u64> = a_pos.iter().copied().collect();
            let naive_b: HashSet<u64> = b_pos.iter().copied().collect();
            let inter: HashSet<u64> = a.intersect(&b).iter().map(|(p, _)| *p).collect();
            let union: HashSet<u64> = a.union(&b).iter().map(|(p, _)| *p).collect();
            assert_eq!(inter, naive_a.intersection(&naive_b).copied().collect());
            assert_eq!(union, naive_a.union(&naive_b).copied().collect());
        }
    }

    proptest! {
        #[test]
        fn merge_output_monotone(
            lists in prop::collection::vec(
                prop::collection::vec((0i64..1000, 0.0f64..100.0), 0..40),
                1..5
            )
        ) {
            let mut next_key = 0i64;
            let sources: Vec<Box<dyn SortedDistanceIterator>> = lists
                .into_iter()
                .map(|list| {
                    let items: Vec<ScoredItem> = list
                        .into_iter()
                        .map(|(_, d)| {
                            next_key += 1;
                            item(next_key, d)
                        })
                        .collect();
                    Box::new(VecDistanceIterator::new(items)) as Box<dyn SortedDistanceIterator>
                })
                .collect();
            let merged = MergedDistanceIterator::merge(sources).unwrap();
            let out = drain(merged);
            prop_assert!(out.windows(2).all(|w| w[0].1 <= w[1].1));
        }
    }
}
