//! Materialized view state: flavors, coverage regions, and pool mutation.

use crate::query::spec::Predicate;
use crate::value::{AttributeValue, KeyValue};
use crate::vector::l2;

pub type ViewId = u64;

#[derive(Debug, Clone, PartialEq)]
pub enum ViewFlavor {
    SpatialRange {
        column: String,
        region: [f64; 4],
    },
    VectorNn {
        column: String,
        center: Vec<f32>,
        /// Query-admission radius: queries farther than this from the center
        /// execute directly.
        radius: f64,
        /// Pool capacity (x·k of the largest linked query).
        xk: usize,
    },
}

impl ViewFlavor {
    pub fn name(&self) -> &'static str {
        match self {
            ViewFlavor::SpatialRange { .. } => "spatial_range",
            ViewFlavor::VectorNn { .. } => "vector_nn",
        }
    }
}

/// The geometric region deciding which record changes can affect the view.
#[derive(Debug, Clone, PartialEq)]
pub enum CoverageRegion {
    Rect([f64; 4]),
    Sphere { center: Vec<f32>, radius: f64 },
}

/// One materialized row: full attribute values in schema column order plus
/// the view's sort score (0 for spatial views, center distance for vector
/// pools).
#[derive(Debug, Clone)]
pub struct ViewRow {
    pub key: KeyValue,
    pub values: Vec<AttributeValue>,
    pub sort_score: f64,
}

impl ViewRow {
    pub fn bytes(&self) -> usize {
        16 + self.values.iter().map(AttributeValue::approx_size).sum::<usize>()
    }
}

#[derive(Debug, Clone)]
pub struct MaterializedView {
    pub id: ViewId,
    pub table: String,
    pub flavor: ViewFlavor,
    /// Shared predicate template of the cluster (excluding the clustered
    /// spatial/vector condition itself).
    pub base_filters: Vec<Predicate>,
    /// Sorted: spatial views by key; vector pools by (sort_score, key).
    pub rows: Vec<ViewRow>,
    pub storage_bytes: usize,
    pub benefit: f64,
    pub watermark: u64,
    pub stale_refill: bool,
    pub hit_count: u64,
}

impl MaterializedView {
    pub fn coverage(&self) -> CoverageRegion {
        match &self.flavor {
            ViewFlavor::SpatialRange { region, .. } => CoverageRegion::Rect(*region),
            ViewFlavor::VectorNn { center, radius, xk, .. } => {
                // maintenance must see every record that could enter the
                // pool: until the pool is full that is every record, after
                // that everything closer than the pool max
                let maintenance = if self.rows.len() < *xk {
                    f64::INFINITY
                } else {
                    self.rows.last().map(|r| r.sort_score).unwrap_or(0.0)
                };
                CoverageRegion::Sphere {
                    center: center.clone(),
                    radius: radius.max(maintenance),
                }
            }
        }
    }

    pub fn recompute_bytes(&mut self) {
        self.storage_bytes = self.rows.iter().map(ViewRow::bytes).sum();
    }

    pub fn remove_key(&mut self, key: &KeyValue) -> bool {
        let before = self.rows.len();
        self.rows.retain(|r| &r.key != key);
        before != self.rows.len()
    }

    /// Insert into a spatial view keeping key order.
    pub fn spatial_upsert(&mut self, row: ViewRow) {
        self.remove_key(&row.key);
        let pos = self.rows.partition_point(|r| r.key < row.key);
        self.rows.insert(pos, row);
    }

    /// Offer a row to a vector pool: admitted when the pool is under
    /// capacity or the score beats the current maximum (which is evicted).
    /// Returns true when the pool changed.
    pub fn pool_offer(&mut self, row: ViewRow) -> bool {
        let ViewFlavor::VectorNn { xk, .. } = &self.flavor else {
            return false;
        };
        let xk = *xk;
        self.remove_key(&row.key);
        let pos = self
            .rows
            .partition_point(|r| (r.sort_score, &r.key) < (row.sort_score, &row.key));
        if self.rows.len() < xk {
            self.rows.insert(pos, row);
            return true;
        }
        if pos < self.rows.len() {
            self.rows.insert(pos, row);
            self.rows.pop();
            return true;
        }
        false
    }

    /// Distance from a query embedding to the view center.
    pub fn center_distance(&self, query: &[f32]) -> Option<f64> {
        match &self.flavor {
            ViewFlavor::VectorNn { center, .. } if center.len() == query.len() => {
                Some(l2(center, query))
            }
            _ => None,
        }
    }
}
