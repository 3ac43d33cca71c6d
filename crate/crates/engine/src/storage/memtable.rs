//! In-memory sorted write buffer. Keeps every version of a key (newest
//! first) so snapshot reads stay correct while newer writes land.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use parking_lot::RwLock;

use crate::value::{KeyValue, Row};

#[derive(Default)]
pub struct Memtable {
    // versions per key, newest (highest seqno) first
    map: RwLock<BTreeMap<KeyValue, Vec<Row>>>,
    bytes: AtomicUsize,
    rows: AtomicUsize,
}

impl Memtable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, row: Row) {
        let size = row.approx_size();
        let mut map = self.map.write();
        let versions = map.entry(row.key.clone()).or_default();
        let pos = versions.partition_point(|v| v.seqno > row.seqno);
        versions.insert(pos, row);
        self.bytes.fetch_add(size, Ordering::Relaxed);
        self.rows.fetch_add(1, Ordering::Relaxed);
    }

    /// Newest version with seqno <= bound, tombstones included.
    pub fn get(&self, key: &KeyValue, seqno_bound: u64) -> Option<Row> {
        let map = self.map.read();
        let versions = map.get(key)?;
        versions.iter().find(|v| v.seqno <= seqno_bound).cloned()
    }

    /// All visible versions, one per key (newest <= bound), in key order.
    pub fn visible_rows(&self, seqno_bound: u64) -> Vec<Row> {
        let map = self.map.read();
        map.values()
            .filter_map(|versions| versions.iter().find(|v| v.seqno <= seqno_bound).cloned())
            .collect()
    }

    /// Every version in key order, for flushing. Tombstones are kept: they
    /// must shadow older segment versions until compaction drops them.
    pub fn all_versions_sorted(&self) -> Vec<Row> {
        let map = self.map.read();
        let mut out = Vec::with_capacity(self.rows.load(Ordering::Relaxed));
        for versions in map.values() {
            // oldest first within a key so downstream "last wins" scans work
            for row in versions.iter().rev() {
                out.push(row.clone());
            }
        }
        out
    }

    pub fn approx_bytes(&self) -> usize {
        self.bytes.load(Ordering::Relaxed)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.load(Ordering::Relaxed) == 0
    }

    pub fn max_seqno(&self) -> u64 {
        let map = self.map.read();
        map.values()
            .filter_map(|v| v.first().map(|r| r.seqno))
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Row;

    fn row(key: i64, seqno: u64) -> Row {
        Row {
            key: KeyValue::Int(key),
            seqno,
            tombstone: false,
            values: vec![],
        }
    }

    #[test]
    fn snapshot_bound_sees_older_version() {
        let mt = Memtable::new();
        mt.insert(row(1, 5));
        mt.insert(row(1, 9));
        assert_eq!(mt.get(&KeyValue::Int(1), 9).unwrap().seqno, 9);
        assert_eq!(mt.get(&KeyValue::Int(1), 7).unwrap().seqno, 5);
        assert!(mt.get(&KeyValue::Int(1), 4).is_none());
    }

    #[test]
    fn tombstone_versions_visible_to_get() {
        let mt = Memtable::new();
        mt.insert(row(1, 1));
        mt.insert(Row::tombstone(KeyValue::Int(1), 2));
        let got = mt.get(&KeyValue::Int(1), 2).unwrap();
        assert!(got.tombstone);
    }
}
