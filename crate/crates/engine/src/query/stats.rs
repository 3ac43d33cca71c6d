//! Per-segment statistics and selectivity estimation.
//!
//! Stats are computed from the rows of a segment at flush/compaction time,
//! so they are fresh as of the last flush; memtable contents are not
//! counted. Selectivity estimates aggregate over the snapshot's segments.

use std::collections::HashMap;

use crate::query::spec::Predicate;
use crate::schema::{ColumnKind, TableSchema};
use crate::text::tokenize;
use crate::value::Row;
use crate::vector::l2;

pub const HISTOGRAM_BINS: usize = 64;
pub const VECTOR_SAMPLE_CAP: usize = 1024;
pub const DF_TABLE_CAP: usize = 256;
/// Estimate used when no statistics cover a predicate.
pub const FALLBACK_SELECTIVITY: f64 = 0.1;

#[derive(Debug, Clone)]
pub enum ColumnStats {
    Scalar {
        count: u64,
        min: f64,
        max: f64,
        histogram: Vec<u32>,
    },
    /// Non-numeric scalar (string): count only.
    Opaque { count: u64 },
    Vector {
        count: u64,
        sample: Vec<Vec<f32>>,
    },
    Spatial {
        count: u64,
        mbr: [f64; 4],
    },
    Text {
        doc_count: u64,
        df_top: HashMap<String, u32>,
    },
}

#[derive(Debug, Clone)]
pub struct SegmentStats {
    pub row_count: u64,
    pub data_bytes: u64,
    pub columns: HashMap<String, ColumnStats>,
}

impl SegmentStats {
    pub fn compute(schema: &TableSchema, rows: &[Row]) -> SegmentStats {
        let live: Vec<&Row> = rows.iter().filter(|r| !r.tombstone).collect();
        let mut columns = HashMap::new();
        let data_bytes: u64 = live.iter().map(|r| r.approx_size() as u64).sum();
        for (idx, col) in schema.columns.iter().enumerate() {
            let values = || live.iter().filter_map(move |r| r.values.get(idx)).filter(|v| !v.is_null());
            let stats = match col.kind {
                ColumnKind::Int64 | ColumnKind::Float64 | ColumnKind::Timestamp => {
                    let nums: Vec<f64> = values().filter_map(|v| v.as_f64()).collect();
                    if nums.is_empty() {
                        ColumnStats::Opaque { count: 0 }
                    } else {
                        let min = nums.iter().copied().fold(f64::INFINITY, f64::min);
                        let max = nums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let mut histogram = vec![0u32; HISTOGRAM_BINS];
                        let width = ((max - min) / HISTOGRAM_BINS as f64).max(f64::MIN_POSITIVE);
                        for &v in &nums {
                            let bin = (((v - min) / width) as usize).min(HISTOGRAM_BINS - 1);
                            histogram[bin] += 1;
                        }
                        ColumnStats::Scalar {
                            count: nums.len() as u64,
                            min,
                            max,
                            histogram,
                        }
                    }
                }
                ColumnKind::String => ColumnStats::Opaque {
                    count: values().count() as u64,
                },
                ColumnKind::Vector { .. } => {
                    // deterministic stride sample instead of a seeded reservoir
                    let all: Vec<&[f32]> = values().filter_map(|v| v.as_vector()).collect();
                    let stride = (all.len() / VECTOR_SAMPLE_CAP).max(1);
                    let sample: Vec<Vec<f32>> = all
                        .iter()
                        .step_by(stride)
                        .take(VECTOR_SAMPLE_CAP)
                        .map(|v| v.to_vec())
                        .collect();
                    ColumnStats::Vector {
                        count: all.len() as u64,
                        sample,
                    }
                }
                ColumnKind::Geometry => {
                    let mut mbr = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
                    let mut count = 0u64;
                    for v in values() {
                        if let Some((x, y)) = v.as_point() {
                            mbr[0] = mbr[0].min(x);
                            mbr[1] = mbr[1].min(y);
                            mbr[2] = mbr[2].max(x);
                            mbr[3] = mbr[3].max(y);
                            count += 1;
                        }
                    }
                    ColumnStats::Spatial { count, mbr }
                }
                ColumnKind::Text => {
                    let mut df: HashMap<String, u32> = HashMap::new();
                    let mut doc_count = 0u64;
                    for v in values() {
                        if let Some(text) = v.as_text() {
                            doc_count += 1;
                            let mut seen = std::collections::HashSet::new();
                            for term in tokenize(text) {
                                if seen.insert(term.clone()) {
                                    *df.entry(term).or_insert(0) += 1;
                                }
                            }
                        }
                    }
                    let mut pairs: Vec<(String, u32)> = df.into_iter().collect();
                    pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                    pairs.truncate(DF_TABLE_CAP);
                    ColumnStats::Text {
                        doc_count,
                        df_top: pairs.into_iter().collect(),
                    }
                }
                ColumnKind::Blob => ColumnStats::Opaque {
                    count: values().count() as u64,
                },
            };
            columns.insert(col.name.clone(), stats);
        }
        SegmentStats {
            row_count: live.len() as u64,
            data_bytes,
            columns,
        }
    }
}

/// Aggregated view over the snapshot's per-segment stats.
pub struct TableStatsView<'a> {
    pub segments: Vec<&'a SegmentStats>,
}

impl<'a> TableStatsView<'a> {
    pub fn new(stats: impl Iterator<Item = &'a SegmentStats>) -> Self {
        TableStatsView {
            segments: stats.collect(),
        }
    }

    pub fn total_rows(&self) -> u64 {
        self.segments.iter().map(|s| s.row_count).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.segments.iter().map(|s| s.data_bytes).sum()
    }

    /// Fraction of rows expected to satisfy `pred`, in [0, 1].
    pub fn estimate_selectivity(&self, pred: &Predicate) -> f64 {
        let mut expected = 0.0f64;
        let mut total = 0.0f64;
        for seg in &self.segments {
            let Some(col) = seg.columns.get(pred.column()) else {
                continue;
            };
            match (pred, col) {
                (Predicate::ScalarRange { lo, hi, .. }, ColumnStats::Scalar { count, min, max, histogram }) => {
                    total += *count as f64;
                    let (Some(lo), Some(hi)) = (lo.to_key().as_f64(), hi.to_key().as_f64()) else {
                        expected += *count as f64 * FALLBACK_SELECTIVITY;
                        continue;
                    };
                    expected += histogram_mass(*min, *max, histogram, lo, hi);
                }
                (Predicate::ScalarRange { .. }, ColumnStats::Opaque { count }) => {
                    total += *count as f64;
                    expected += *count as f64 * FALLBACK_SELECTIVITY;
                }
                (Predicate::SpatialContains { region, .. }, ColumnStats::Spatial { count, mbr }) => {
                    total += *count as f64;
                    let q = region.bounding_rect();
                    let ix = (q[2].min(mbr[2]) - q[0].max(mbr[0])).max(0.0);
                    let iy = (q[3].min(mbr[3]) - q[1].max(mbr[1])).max(0.0);
                    let mbr_area = (mbr[2] - mbr[0]).max(f64::MIN_POSITIVE)
                        * (mbr[3] - mbr[1]).max(f64::MIN_POSITIVE);
                    let frac = ((ix * iy) / mbr_area).clamp(0.0, 1.0);
                    expected += *count as f64 * frac;
                }
                (Predicate::Keyword { term, .. }, ColumnStats::Text { doc_count, df_top }) => {
                    total += *doc_count as f64;
                    let df = df_top.get(term).copied().map(f64::from).unwrap_or(0.5);
                    expected += df;
                }
                (Predicate::VectorThreshold { query, threshold, .. }, ColumnStats::Vector { count, sample }) => {
                    total += *count as f64;
                    if sample.is_empty() {
                        expected += *count as f64 * FALLBACK_SELECTIVITY;
                    } else {
                        let hits = sample
                            .iter()
                            .filter(|v| v.len() == query.len() && l2(v, query) < *threshold)
                            .count();
                        expected += *count as f64 * hits as f64 / sample.len() as f64;
                    }
                }
                _ => {
                    // stats kind does not match the predicate kind
                }
            }
        }
        if total <= 0.0 {
            return FALLBACK_SELECTIVITY;
        }
        (expected / total).clamp(0.0, 1.0)
    }
}

/// Expected row mass of histogram within [lo, hi] by linear interpolation of
/// partially covered bins.
fn histogram_mass(min: f64, max: f64, histogram: &[u32], lo: f64, hi: f64) -> f64 {
    if hi < min || lo > max {
        return 0.0;
    }
    if min == max {
        return if lo <= min && hi >= max {
            histogram.iter().map(|&c| c as f64).sum()
        } else {
            0.0
        };
    }
    let width = (max - min) / histogram.len() as f64;
    let mut mass = 0.0;
    for (i, &count) in histogram.iter().enumerate() {
        let b_lo = min + i as f64 * width;
        let b_hi = if i + 1 == histogram.len() { max } else { b_lo + width };
        let overlap = (hi.min(b_hi) - lo.max(b_lo)).max(0.0);
        let bin_width = (b_hi - b_lo).max(f64::MIN_POSITIVE);
        // the final bin's upper edge is inclusive
        let frac = if overlap >= bin_width { 1.0 } else { overlap / bin_width };
        mass += count as f64 * frac;
    }
    mass
}
