//! Attribute values, primary keys, and record shapes shared across the engine.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A primary key value. Tables declare their key column as int64 or string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KeyValue {
    Int(i64),
    Str(String),
}

impl KeyValue {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            KeyValue::Int(v) => Some(*v),
            KeyValue::Str(_) => None,
        }
    }
}

impl PartialOrd for KeyValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for KeyValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (KeyValue::Int(a), KeyValue::Int(b)) => a.cmp(b),
            (KeyValue::Str(a), KeyValue::Str(b)) => a.cmp(b),
            // Mixed kinds cannot occur within one table; fall back to a stable order.
            (KeyValue::Int(_), KeyValue::Str(_)) => Ordering::Less,
            (KeyValue::Str(_), KeyValue::Int(_)) => Ordering::Greater,
        }
    }
}

impl fmt::Display for KeyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyValue::Int(v) => write!(f, "{v}"),
            KeyValue::Str(s) => write!(f, "{s}"),
        }
    }
}

impl From<i64> for KeyValue {
    fn from(v: i64) -> Self {
        KeyValue::Int(v)
    }
}

impl From<&str> for KeyValue {
    fn from(v: &str) -> Self {
        KeyValue::Str(v.to_string())
    }
}

/// Planar geometry. Stored attribute values are indexed only when they are
/// points; query regions may be rectangles or polygons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GeometryValue {
    #[serde(rename = "point")]
    Point([f64; 2]),
    #[serde(rename = "rect")]
    Rect([f64; 4]),
    #[serde(rename = "polygon")]
    Polygon(Vec<[f64; 2]>),
}

impl GeometryValue {
    pub fn point(x: f64, y: f64) -> Self {
        GeometryValue::Point([x, y])
    }

    pub fn rect(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        GeometryValue::Rect([xmin, ymin, xmax, ymax])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GeometryValue::Point(p) => {
                if p.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidRegion("non-finite point coordinate".into()));
                }
            }
            GeometryValue::Rect([xmin, ymin, xmax, ymax]) => {
                if !(xmin <= xmax && ymin <= ymax) {
                    return Err(Error::InvalidRegion(format!(
                        "rect bounds inverted: [{xmin},{ymin},{xmax},{ymax}]"
                    )));
                }
            }
            GeometryValue::Polygon(ring) => {
                let mut distinct = ring.to_vec();
                distinct.dedup();
                if distinct.last() == distinct.first() && distinct.len() > 1 {
                    distinct.pop();
                }
                if distinct.len() < 3 {
                    return Err(Error::InvalidRegion(
                        "polygon ring needs at least 3 distinct vertices".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Exact containment test for a point. Polygon uses ray casting with
    /// on-edge counted as inside.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        match self {
            GeometryValue::Point([px, py]) => *px == x && *py == y,
            GeometryValue::Rect([xmin, ymin, xmax, ymax]) => {
                x >= *xmin && x <= *xmax && y >= *ymin && y <= *ymax
            }
            GeometryValue::Polygon(ring) => polygon_contains(ring, x, y),
        }
    }

    /// Axis-aligned bounding box as (xmin, ymin, xmax, ymax).
    pub fn bounding_rect(&self) -> [f64; 4] {
        match self {
            GeometryValue::Point([x, y]) => [*x, *y, *x, *y],
            GeometryValue::Rect(r) => *r,
            GeometryValue::Polygon(ring) => {
                let mut r = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
                for [x, y] in ring {
                    r[0] = r[0].min(*x);
                    r[1] = r[1].min(*y);
                    r[2] = r[2].max(*x);
                    r[3] = r[3].max(*y);
                }
                r
            }
        }
    }
}

fn on_segment(ax: f64, ay: f64, bx: f64, by: f64, x: f64, y: f64) -> bool {
    let cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax);
    if cross.abs() > 1e-12 {
        return false;
    }
    x >= ax.min(bx) - 1e-12 && x <= ax.max(bx) + 1e-12 && y >= ay.min(by) - 1e-12 && y <= ay.max(by) + 1e-12
}

fn polygon_contains(ring: &[[f64; 2]], x: f64, y: f64) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let [xi, yi] = ring[i];
        let [xj, yj] = ring[j];
        if on_segment(xi, yi, xj, yj, x, y) {
            return true;
        }
        if (yi > y) != (yj > y) {
            let x_cross = (xj - xi) * (y - yi) / (yj - yi) + xi;
            if x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// One attribute value of a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttributeValue {
    Null,
    Int(i64),
    Float(f64),
    Str(String),
    Vector(Vec<f32>),
    Geometry(GeometryValue),
    Blob(Vec<u8>),
}

impl AttributeValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttributeValue::Int(v) => Some(*v as f64),
            AttributeValue::Float(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[f32]> {
        match self {
            AttributeValue::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_point(&self) -> Option<(f64, f64)> {
        match self {
            AttributeValue::Geometry(GeometryValue::Point([x, y])) => Some((*x, *y)),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            AttributeValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, AttributeValue::Null)
    }

    /// Rough in-memory size, used for memtable accounting.
    pub fn approx_size(&self) -> usize {
        match self {
            AttributeValue::Null => 1,
            AttributeValue::Int(_) | AttributeValue::Float(_) => 9,
            AttributeValue::Str(s) => 5 + s.len(),
            AttributeValue::Vector(v) => 5 + v.len() * 4,
            AttributeValue::Geometry(g) => match g {
                GeometryValue::Point(_) => 17,
                GeometryValue::Rect(_) => 33,
                GeometryValue::Polygon(ring) => 5 + ring.len() * 16,
            },
            AttributeValue::Blob(b) => 5 + b.len(),
        }
    }
}

/// A record presented for ingestion: a primary key plus named attributes.
/// The storage layer validates it against the table schema and assigns the
/// sequence number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub key: KeyValue,
    pub attrs: BTreeMap<String, AttributeValue>,
}

impl Record {
    pub fn new(key: impl Into<KeyValue>) -> Self {
        Record {
            key: key.into(),
            attrs: BTreeMap::new(),
        }
    }

    pub fn with(mut self, column: &str, value: AttributeValue) -> Self {
        self.attrs.insert(column.to_string(), value);
        self
    }
}

/// A fully resolved row as stored: values aligned to schema column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub key: KeyValue,
    pub seqno: u64,
    pub tombstone: bool,
    pub values: Vec<AttributeValue>,
}

impl Row {
    pub fn tombstone(key: KeyValue, seqno: u64) -> Self {
        Row {
            key,
            seqno,
            tombstone: true,
            values: Vec::new(),
        }
    }

    pub fn approx_size(&self) -> usize {
        let key = match &self.key {
            KeyValue::Int(_) => 9,
            KeyValue::Str(s) => 5 + s.len(),
        };
        key + 10 + self.values.iter().map(AttributeValue::approx_size).sum::<usize>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_containment_is_inclusive() {
        let r = GeometryValue::rect(0.0, 0.0, 10.0, 10.0);
        assert!(r.contains_point(0.0, 0.0));
        assert!(r.contains_point(10.0, 10.0));
        assert!(r.contains_point(5.0, 5.0));
        assert!(!r.contains_point(10.0001, 5.0));
    }

    #[test]
    fn polygon_ray_casting_counts_edges_as_inside() {
        let tri = GeometryValue::Polygon(vec![[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]]);
        assert!(tri.contains_point(1.0, 1.0));
        assert!(tri.contains_point(2.0, 0.0)); // on edge
        assert!(tri.contains_point(0.0, 0.0)); // vertex
        assert!(!tri.contains_point(3.0, 3.0));
    }

    #[test]
    fn degenerate_polygon_rejected() {
        let line = GeometryValue::Polygon(vec![[0.0, 0.0], [1.0, 1.0]]);
        assert!(line.validate().is_err());
    }
}
