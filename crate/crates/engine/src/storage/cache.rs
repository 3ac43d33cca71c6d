//! Byte-capacity LRU block cache with a physical-read counter.
//!
//! The counter is monotone and observable so tests can assert block-access
//! bounds and pruning behavior. Capacity 0 disables admission entirely,
//! which makes every access a physical read.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;

#[derive(Debug, Default)]
pub struct CacheMetrics {
    physical_reads: AtomicU64,
    cache_hits: AtomicU64,
    /// Out-of-domain points clamped during z-order encoding.
    pub spatial_clamps: AtomicU64,
    per_segment: Mutex<HashMap<u64, u64>>,
}

impl CacheMetrics {
    pub fn physical_reads(&self) -> u64 {
        self.physical_reads.load(Ordering::SeqCst)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::SeqCst)
    }

    pub fn segment_reads(&self, segment_id: u64) -> u64 {
        *self.per_segment.lock().get(&segment_id).unwrap_or(&0)
    }

    /// Set of segments that have incurred at least one physical read.
    pub fn touched_segments(&self) -> Vec<u64> {
        self.per_segment.lock().keys().copied().collect()
    }

    fn record_read(&self, segment_id: u64) {
        self.physical_reads.fetch_add(1, Ordering::SeqCst);
        *self.per_segment.lock().entry(segment_id).or_insert(0) += 1;
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct BlockKey {
    segment_id: u64,
    offset: u64,
}

struct Entry {
    data: Arc<Vec<u8>>,
    tick: u64,
}

struct Inner {
    map: HashMap<BlockKey, Entry>,
    // tick -> key, oldest first; ticks are unique
    order: std::collections::BTreeMap<u64, BlockKey>,
    bytes: usize,
    next_tick: u64,
}

pub struct BlockCache {
    capacity: usize,
    inner: Mutex<Inner>,
    pub metrics: CacheMetrics,
}

impl BlockCache {
    pub fn new(capacity_bytes: usize) -> Self {
        BlockCache {
            capacity: capacity_bytes,
            inner: Mutex::new(Inner {
                map: HashMap::new(),
                order: std::collections::BTreeMap::new(),
                bytes: 0,
                next_tick: 0,
            }),
            metrics: CacheMetrics::default(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, segment_id: u64, offset: u64) -> Option<Arc<Vec<u8>>> {
        let key = BlockKey { segment_id, offset };
        let mut inner = self.inner.lock();
        let tick = inner.next_tick;
        inner.next_tick += 1;
        if let Some(entry) = inner.map.get_mut(&key) {
            let old = entry.tick;
            entry.tick = tick;
            let data = entry.data.clone();
            inner.order.remove(&old);
            inner.order.insert(tick, key);
            self.metrics.cache_hits.fetch_add(1, Ordering::SeqCst);
            Some(data)
        } else {
            None
        }
    }

    /// Record a physical read and admit the block if it fits.
    pub fn admit(&self, segment_id: u64, offset: u64, data: Arc<Vec<u8>>) {
        self.metrics.record_read(segment_id);
        let size = data.len();
        if size > self.capacity || self.capacity == 0 {
            return;
        }
        let key = BlockKey { segment_id, offset };
        let mut inner = self.inner.lock();
        let tick = inner.next_tick;
        inner.next_tick += 1;
        if let Some(old) = inner.map.insert(key, Entry { data, tick }) {
            inner.order.remove(&old.tick);
            inner.bytes -= old.data.len();
        }
        inner.order.insert(tick, key);
        inner.bytes += size;
        while inner.bytes > self.capacity {
            let (&oldest, &victim) = inner.order.iter().next().expect("bytes>0 implies entries");
            inner.order.remove(&oldest);
            if let Some(evicted) = inner.map.remove(&victim) {
                inner.bytes -= evicted.data.len();
            }
        }
    }

    /// Drop every segment of a cache (used by tests that measure cold reads).
    pub fn clear(&self) {
        let mut inner = self.inner.lock();
        inner.map.clear();
        inner.order.clear();
        inner.bytes = 0;
    }
}
