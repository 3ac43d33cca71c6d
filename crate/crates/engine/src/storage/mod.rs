//! LSM storage: write path (WAL + memtable), immutable segments, snapshots,
//! background flush and size-tiered compaction.
//!
//! Concurrency contract: writes to one table are serialized through a single
//! writer lock; readers operate on snapshots and never block the writer.
//! Published state (`TableState`) is an immutable value swapped atomically,
//! so a snapshot pins a consistent set of memtables, segments, per-segment
//! statistics, and the matching global index.

pub mod block;
pub mod cache;
pub mod codec;
pub mod memtable;
pub mod segment;
pub mod wal;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crossbeam_channel::{unbounded, Sender};
use parking_lot::{Condvar, Mutex, RwLock};

use crate::error::{Error, Result};
use crate::index::{self, GlobalIndex};
use crate::query::stats::SegmentStats;
use crate::schema::TableSchema;
use crate::value::{AttributeValue, KeyValue, Record, Row};

pub use block::BlockHandle;
pub use cache::{BlockCache, CacheMetrics};
pub use memtable::Memtable;
pub use segment::{IndexableRow, Segment, SegmentBuilder};
pub use wal::WalSync;

#[derive(Debug, Clone)]
pub struct DatabaseOptions {
    pub cache_bytes: usize,
    pub flush_threshold_bytes: usize,
    pub wal_sync: WalSync,
    /// Spawn a background worker for flush/compaction. When false, flushes
    /// run inline on the writing thread once the threshold trips.
    pub background_workers: bool,
    /// Writer backpressure: maximum frozen memtables awaiting flush.
    pub max_frozen_memtables: usize,
    /// Size-tiered compaction trigger: merge a level once it holds this many
    /// segments.
    pub compaction_threshold: usize,
}

impl Default for DatabaseOptions {
    fn default() -> Self {
        DatabaseOptions {
            cache_bytes: 512 << 20,
            flush_threshold_bytes: 8 << 20,
            wal_sync: WalSync::default(),
            background_workers: true,
            max_frozen_memtables: 4,
            compaction_threshold: 4,
        }
    }
}

/// A frozen memtable awaiting flush, with the WAL generation that covers it.
pub struct FrozenMemtable {
    pub memtable: Arc<Memtable>,
    wal_first_seqno: u64,
}

/// Immutable published state of one table.
pub struct TableState {
    pub memtable: Arc<Memtable>,
    pub frozen: Vec<Arc<FrozenMemtable>>,
    /// Live segments, newest (highest max_seqno) first.
    pub segments: Vec<Arc<Segment>>,
    pub global: Arc<GlobalIndex>,
    pub stats: Arc<HashMap<u64, Arc<SegmentStats>>>,
}

impl TableState {
    fn empty() -> Self {
        TableState {
            memtable: Arc::new(Memtable::new()),
            frozen: Vec::new(),
            segments: Vec::new(),
            global: Arc::new(GlobalIndex::default()),
            stats: Arc::new(HashMap::new()),
        }
    }
}

/// A consistent read view: sequence bound plus the pinned state.
#[derive(Clone)]
pub struct Snapshot {
    pub schema: Arc<TableSchema>,
    pub seqno: u64,
    pub state: Arc<TableState>,
    pub cache: Arc<BlockCache>,
}

impl Snapshot {
    /// Segments whose summary overlaps the query summary (a superset of
    /// those containing matches), with their index roots. Errors when the
    /// column has no declared index.
    pub fn prune_segments(
        &self,
        column: &str,
        query: &crate::index::QuerySummary,
    ) -> Result<Vec<(u64, BlockHandle)>> {
        if self.schema.index_for_column(column).is_none() {
            return Err(Error::UnindexedColumn(column.to_string()));
        }
        Ok(self.state.global.prune(column, query))
    }

    /// Newest version of `key` with seqno <= bound, tombstones included.
    pub fn newest_version(&self, key: &KeyValue) -> Result<Option<Row>> {
        let mut best: Option<Row> = None;
        let consider = |best: &mut Option<Row>, row: Row| {
            if best.as_ref().map(|b| row.seqno > b.seqno).unwrap_or(true) {
                *best = Some(row);
            }
        };
        if let Some(row) = self.state.memtable.get(key, self.seqno) {
            consider(&mut best, row);
        }
        for frozen in &self.state.frozen {
            if let Some(row) = frozen.memtable.get(key, self.seqno) {
                consider(&mut best, row);
            }
        }
        let floor = best.as_ref().map(|b| b.seqno).unwrap_or(0);
        for segment in &self.state.segments {
            if segment.max_seqno < floor || segment.min_seqno > self.seqno {
                continue;
            }
            if let Some(row) = segment.get(key, self.seqno, &self.cache)? {
                consider(&mut best, row);
            }
        }
        Ok(best)
    }

    pub fn get(&self, key: &KeyValue) -> Result<Option<Row>> {
        Ok(self.newest_version(key)?.filter(|r| !r.tombstone))
    }

    /// True when (key, seqno) is the newest visible version at this snapshot.
    pub fn is_visible(&self, key: &KeyValue, seqno: u64) -> Result<bool> {
        Ok(self
            .newest_version(key)?
            .map(|r| r.seqno == seqno && !r.tombstone)
            .unwrap_or(false))
    }

    /// Visible (non-tombstone) rows whose newest version lives in a memtable.
    /// Index paths only cover segments; executors union this overlay in.
    pub fn memtable_overlay(&self) -> Vec<Row> {
        let mut newest: HashMap<KeyValue, Row> = HashMap::new();
        let mut absorb = |rows: Vec<Row>| {
            for row in rows {
                match newest.get(&row.key) {
                    Some(prev) if prev.seqno >= row.seqno => {}
                    _ => {
                        newest.insert(row.key.clone(), row);
                    }
                }
            }
        };
        absorb(self.state.memtable.visible_rows(self.seqno));
        for frozen in &self.state.frozen {
            absorb(frozen.memtable.visible_rows(self.seqno));
        }
        let mut rows: Vec<Row> = newest.into_values().filter(|r| !r.tombstone).collect();
        rows.sort_by(|a, b| a.key.cmp(&b.key));
        rows
    }

    /// Full visible scan in key order (newest version <= bound, tombstones
    /// dropped).
    pub fn scan(&self) -> Result<Vec<Row>> {
        let mut sources: Vec<Vec<Row>> = Vec::new();
        sources.push(self.state.memtable.visible_rows(self.seqno));
        for frozen in &self.state.frozen {
            sources.push(frozen.memtable.visible_rows(self.seqno));
        }
        let mut merged: HashMap<KeyValue, Row> = HashMap::new();
        for source in sources {
            for row in source {
                match merged.get(&row.key) {
                    Some(prev) if prev.seqno >= row.seqno => {}
                    _ => {
                        merged.insert(row.key.clone(), row);
                    }
                }
            }
        }
        for segment in &self.state.segments {
            if segment.min_seqno > self.seqno {
                continue;
            }
            for row in segment.iter_rows(&self.cache) {
                let row = row?;
                if row.seqno > self.seqno {
                    continue;
                }
                match merged.get(&row.key) {
                    Some(prev) if prev.seqno >= row.seqno => {}
                    _ => {
                        merged.insert(row.key.clone(), row);
                    }
                }
            }
        }
        let mut rows: Vec<Row> = merged.into_values().filter(|r| !r.tombstone).collect();
        rows.sort_by(|a, b| a.key.cmp(&b.key));
        Ok(rows)
    }

    pub fn column_value<'a>(&self, row: &'a Row, column: &str) -> Option<&'a AttributeValue> {
        let idx = self.schema.column_index(column)?;
        row.values.get(idx)
    }
}

enum Job {
    Flush(Arc<Table>),
    Shutdown,
}

struct WriterState {
    wal: wal::Wal,
}

pub struct Table {
    pub schema: Arc<TableSchema>,
    dir: PathBuf,
    state: RwLock<Arc<TableState>>,
    writer: Mutex<WriterState>,
    seqno: AtomicU64,
    next_segment_id: Arc<AtomicU64>,
    cache: Arc<BlockCache>,
    options: DatabaseOptions,
    flush_tx: Mutex<Option<Sender<Job>>>,
    frozen_gate: Mutex<()>,
    frozen_cv: Condvar,
    observers: RwLock<Vec<Arc<dyn Fn(&Row) + Send + Sync>>>,
    /// Serializes flush/compaction so installs stay ordered.
    maintenance: Mutex<()>,
}

impl Table {
    fn create(
        dir: PathBuf,
        schema: TableSchema,
        cache: Arc<BlockCache>,
        options: DatabaseOptions,
        next_segment_id: Arc<AtomicU64>,
    ) -> Result<Arc<Table>> {
        std::fs::create_dir_all(&dir)?;
        let schema_path = dir.join("schema.json");
        std::fs::write(&schema_path, serde_json::to_vec_pretty(&schema)?)?;
        let wal = wal::Wal::create(&dir.join("wal"), 1, options.wal_sync)?;
        Ok(Arc::new(Table {
            schema: Arc::new(schema),
            dir,
            state: RwLock::new(Arc::new(TableState::empty())),
            writer: Mutex::new(WriterState { wal }),
            seqno: AtomicU64::new(0),
            next_segment_id,
            cache,
            options,
            flush_tx: Mutex::new(None),
            frozen_gate: Mutex::new(()),
            frozen_cv: Condvar::new(),
            observers: RwLock::new(Vec::new()),
            maintenance: Mutex::new(()),
        }))
    }

    fn open(
        dir: PathBuf,
        cache: Arc<BlockCache>,
        options: DatabaseOptions,
        next_segment_id: Arc<AtomicU64>,
    ) -> Result<Arc<Table>> {
        let schema: TableSchema = serde_json::from_slice(&std::fs::read(dir.join("schema.json"))?)?;
        schema.validate()?;
        let mut segments: Vec<Arc<Segment>> = Vec::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            if Segment::parse_file_name(name).is_some() {
                segments.push(Segment::open(&path)?);
            }
        }
        segments.sort_by(|a, b| b.max_seqno.cmp(&a.max_seqno));
        let persisted = segments.iter().map(|s| s.max_seqno).max().unwrap_or(0);
        // segment ids are database-global: the block cache keys on them
        let max_seen = segments.iter().map(|s| s.id).max().unwrap_or(0);
        next_segment_id.fetch_max(max_seen + 1, Ordering::SeqCst);

        // The global index is a volatile cache of per-segment summaries;
        // rebuild it from the segment index roots.
        let mut global = GlobalIndex::default();
        let mut stats: HashMap<u64, Arc<SegmentStats>> = HashMap::new();
        for segment in &segments {
            let summaries = index::read_segment_summaries(segment, &schema, &cache)?;
            global.insert(segment, summaries);
            let rows: Vec<Row> = segment
                .iter_rows(&cache)
                .collect::<Result<Vec<_>>>()?;
            stats.insert(segment.id, Arc::new(SegmentStats::compute(&schema, &rows)));
        }

        let memtable = Arc::new(Memtable::new());
        let max_seqno = wal::replay(&dir.join("wal"), persisted, |row| memtable.insert(row))?;
        let wal = wal::Wal::create(&dir.join("wal"), max_seqno + 1, options.wal_sync)?;

        let state = TableState {
            memtable,
            frozen: Vec::new(),
            segments,
            global: Arc::new(global),
            stats: Arc::new(stats),
        };
        Ok(Arc::new(Table {
            schema: Arc::new(schema),
            dir,
            state: RwLock::new(Arc::new(state)),
            writer: Mutex::new(WriterState { wal }),
            seqno: AtomicU64::new(max_seqno),
            next_segment_id,
            cache,
            options,
            flush_tx: Mutex::new(None),
            frozen_gate: Mutex::new(()),
            frozen_cv: Condvar::new(),
            observers: RwLock::new(Vec::new()),
            maintenance: Mutex::new(()),
        }))
    }

    pub fn name(&self) -> &str {
        &self.schema.table_name
    }

    pub fn cache(&self) -> &Arc<BlockCache> {
        &self.cache
    }

    pub fn last_seqno(&self) -> u64 {
        self.seqno.load(Ordering::SeqCst)
    }

    pub fn add_observer(&self, observer: Arc<dyn Fn(&Row) + Send + Sync>) {
        self.observers.write().push(observer);
    }

    pub fn snapshot(self: &Arc<Self>) -> Snapshot {
        Snapshot {
            schema: self.schema.clone(),
            seqno: self.seqno.load(Ordering::SeqCst),
            state: self.state.read().clone(),
            cache: self.cache.clone(),
        }
    }

    /// Snapshot bounded at an explicit sequence number.
    pub fn snapshot_at(self: &Arc<Self>, seqno: u64) -> Snapshot {
        let mut snap = self.snapshot();
        snap.seqno = seqno.min(snap.seqno);
        snap
    }

    pub fn put(self: &Arc<Self>, record: &Record) -> Result<u64> {
        // Validate outside the writer lock; seqno assignment happens inside.
        self.schema.record_to_row(record, 0)?;
        self.write_row(|seqno| self.schema.record_to_row(record, seqno).expect("validated"))
    }

    pub fn delete(self: &Arc<Self>, key: &KeyValue) -> Result<u64> {
        self.write_row(|seqno| Row::tombstone(key.clone(), seqno))
    }

    fn write_row(self: &Arc<Self>, make: impl FnOnce(u64) -> Row) -> Result<u64> {
        self.wait_for_frozen_capacity();
        let mut flush_after = false;
        let seqno;
        {
            let mut writer = self.writer.lock();
            seqno = self.seqno.fetch_add(1, Ordering::SeqCst) + 1;
            let row = make(seqno);
            writer.wal.append(&row)?;
            let state = self.state.read().clone();
            state.memtable.insert(row.clone());
            if state.memtable.approx_bytes() >= self.options.flush_threshold_bytes {
                self.freeze_memtable(&mut writer)?;
                flush_after = true;
            }
            drop(writer);
            for observer in self.observers.read().iter() {
                observer(&row);
            }
        }
        if flush_after {
            self.schedule_flush();
        }
        Ok(seqno)
    }

    fn wait_for_frozen_capacity(&self) {
        if !self.options.background_workers {
            return;
        }
        let mut gate = self.frozen_gate.lock();
        while self.state.read().frozen.len() >= self.options.max_frozen_memtables {
            self.frozen_cv.wait(&mut gate);
        }
    }

    /// Swap in a fresh memtable; the old one moves to the frozen queue. This
    /// is the only write-path pause a flush ever causes.
    fn freeze_memtable(&self, writer: &mut WriterState) -> Result<()> {
        let old_state = self.state.read().clone();
        if old_state.memtable.is_empty() {
            return Ok(());
        }
        let wal_first = writer.wal.first_seqno();
        writer.wal.rotate(self.seqno.load(Ordering::SeqCst) + 1)?;
        let mut frozen = old_state.frozen.clone();
        frozen.push(Arc::new(FrozenMemtable {
            memtable: old_state.memtable.clone(),
            wal_first_seqno: wal_first,
        }));
        let new_state = TableState {
            memtable: Arc::new(Memtable::new()),
            frozen,
            segments: old_state.segments.clone(),
            global: old_state.global.clone(),
            stats: old_state.stats.clone(),
        };
        *self.state.write() = Arc::new(new_state);
        Ok(())
    }

    fn schedule_flush(self: &Arc<Self>) {
        if self.options.background_workers {
            if let Some(tx) = self.flush_tx.lock().as_ref() {
                let _ = tx.send(Job::Flush(self.clone()));
                return;
            }
        }
        // Inline fallback: no worker attached.
        let _ = self.flush_pending();
        let _ = self.maybe_compact();
    }

    /// Flush every frozen memtable (oldest first). Returns flushed segments.
    pub fn flush_pending(self: &Arc<Self>) -> Result<Vec<Arc<Segment>>> {
        let _guard = self.maintenance.lock();
        let mut out = Vec::new();
        loop {
            let frozen = {
                let state = self.state.read();
                state.frozen.first().cloned()
            };
            let Some(frozen) = frozen else { break };
            if let Some(segment) = self.flush_one(&frozen)? {
                out.push(segment);
            }
        }
        Ok(out)
    }

    /// Freeze the active memtable (if non-empty) and flush everything.
    pub fn flush_now(self: &Arc<Self>) -> Result<Vec<Arc<Segment>>> {
        {
            let mut writer = self.writer.lock();
            self.freeze_memtable(&mut writer)?;
        }
        self.flush_pending()
    }

    fn flush_one(self: &Arc<Self>, frozen: &Arc<FrozenMemtable>) -> Result<Option<Arc<Segment>>> {
        let rows = frozen.memtable.all_versions_sorted();
        let installed = if rows.is_empty() {
            None
        } else {
            let segment_id = self.next_segment_id.fetch_add(1, Ordering::SeqCst);
            let mut builder = SegmentBuilder::new(segment_id, 0);
            builder.add_rows(&rows)?;
            let summaries = index::build_segment_indexes(&mut builder, &self.schema, &self.cache.metrics)?;
            let stats = Arc::new(SegmentStats::compute(&self.schema, &rows));
            let segment = builder.finish(&self.dir)?;
            self.install(segment.clone(), summaries, stats, &[], frozen)?;
            Some(segment)
        };
        if installed.is_none() {
            // nothing to write; still retire the frozen entry
            self.retire_frozen(frozen)?;
        }
        self.frozen_cv.notify_all();
        Ok(installed)
    }

    fn retire_frozen(&self, frozen: &Arc<FrozenMemtable>) -> Result<()> {
        let mut state_guard = self.state.write();
        let old = state_guard.clone();
        let new_frozen: Vec<_> = old
            .frozen
            .iter()
            .filter(|f| !Arc::ptr_eq(f, frozen))
            .cloned()
            .collect();
        *state_guard = Arc::new(TableState {
            memtable: old.memtable.clone(),
            frozen: new_frozen,
            segments: old.segments.clone(),
            global: old.global.clone(),
            stats: old.stats.clone(),
        });
        drop(state_guard);
        wal::remove_obsolete(&self.dir.join("wal"), frozen.wal_first_seqno + 1)?;
        Ok(())
    }

    fn install(
        &self,
        segment: Arc<Segment>,
        summaries: index::SegmentSummaries,
        stats: Arc<SegmentStats>,
        remove: &[Arc<Segment>],
        retire: &Arc<FrozenMemtable>,
    ) -> Result<()> {
        let mut state_guard = self.state.write();
        let old = state_guard.clone();
        let mut global = (*old.global).clone();
        let mut stats_map = (*old.stats).clone();
        for victim in remove {
            global.remove(victim.id);
            stats_map.remove(&victim.id);
        }
        global.insert(&segment, summaries);
        stats_map.insert(segment.id, stats);
        let mut segments: Vec<Arc<Segment>> = old
            .segments
            .iter()
            .filter(|s| !remove.iter().any(|r| r.id == s.id))
            .cloned()
            .collect();
        segments.push(segment);
        segments.sort_by(|a, b| b.max_seqno.cmp(&a.max_seqno));
        let frozen: Vec<_> = old
            .frozen
            .iter()
            .filter(|f| !Arc::ptr_eq(f, retire))
            .cloned()
            .collect();
        *state_guard = Arc::new(TableState {
            memtable: old.memtable.clone(),
            frozen,
            segments,
            global: Arc::new(global),
            stats: Arc::new(stats_map),
        });
        drop(state_guard);
        wal::remove_obsolete(&self.dir.join("wal"), retire.wal_first_seqno + 1)?;
        Ok(())
    }

    /// Size-tiered compaction: merge any level holding at least
    /// `compaction_threshold` segments into one output at level+1. Repeats
    /// until no level triggers.
    pub fn maybe_compact(self: &Arc<Self>) -> Result<Vec<Arc<Segment>>> {
        let mut outputs = Vec::new();
        loop {
            let inputs = {
                let state = self.state.read();
                let mut by_level: HashMap<u32, Vec<Arc<Segment>>> = HashMap::new();
                for segment in &state.segments {
                    by_level.entry(segment.level).or_default().push(segment.clone());
                }
                by_level
                    .into_iter()
                    .filter(|(_, group)| group.len() >= self.options.compaction_threshold)
                    .min_by_key(|(level, _)| *level)
                    .map(|(_, group)| group)
            };
            let Some(inputs) = inputs else { break };
            if let Some(output) = self.compact(&inputs)? {
                outputs.push(output);
            }
        }
        Ok(outputs)
    }

    /// Merge `inputs` into one segment. Duplicate keys resolve to the max
    /// seqno; tombstones are dropped once no segment outside the inputs can
    /// still hold the key.
    pub fn compact(self: &Arc<Self>, inputs: &[Arc<Segment>]) -> Result<Option<Arc<Segment>>> {
        let _guard = self.maintenance.lock();
        if inputs.is_empty() {
            return Ok(None);
        }
        let outside: Vec<Arc<Segment>> = {
            let state = self.state.read();
            state
                .segments
                .iter()
                .filter(|s| !inputs.iter().any(|i| i.id == s.id))
                .cloned()
                .collect()
        };
        let mut newest: HashMap<KeyValue, Row> = HashMap::new();
        for segment in inputs {
            for row in segment.iter_rows(&self.cache) {
                let row = row?;
                match newest.get(&row.key) {
                    Some(prev) if prev.seqno >= row.seqno => {}
                    _ => {
                        newest.insert(row.key.clone(), row);
                    }
                }
            }
        }
        let mut rows: Vec<Row> = newest
            .into_values()
            .filter(|row| {
                if !row.tombstone {
                    return true;
                }
                outside.iter().any(|s| s.key_in_range(&row.key))
            })
            .collect();
        rows.sort_by(|a, b| a.key.cmp(&b.key).then(a.seqno.cmp(&b.seqno)));

        let level = inputs.iter().map(|s| s.level).max().unwrap_or(0) + 1;
        let output = if rows.is_empty() {
            None
        } else {
            let segment_id = self.next_segment_id.fetch_add(1, Ordering::SeqCst);
            let mut builder = SegmentBuilder::new(segment_id, level);
            builder.add_rows(&rows)?;
            let summaries = index::build_segment_indexes(&mut builder, &self.schema, &self.cache.metrics)?;
            let stats = Arc::new(SegmentStats::compute(&self.schema, &rows));
            Some((builder.finish(&self.dir)?, summaries, stats))
        };

        let mut state_guard = self.state.write();
        let old = state_guard.clone();
        let mut global = (*old.global).clone();
        let mut stats_map = (*old.stats).clone();
        let mut segments: Vec<Arc<Segment>> = old
            .segments
            .iter()
            .filter(|s| !inputs.iter().any(|i| i.id == s.id))
            .cloned()
            .collect();
        for victim in inputs {
            global.remove(victim.id);
            stats_map.remove(&victim.id);
            victim.mark_obsolete();
        }
        let installed = output.map(|(segment, summaries, stats)| {
            global.insert(&segment, summaries);
            stats_map.insert(segment.id, stats);
            segments.push(segment.clone());
            segment
        });
        segments.sort_by(|a, b| b.max_seqno.cmp(&a.max_seqno));
        *state_guard = Arc::new(TableState {
            memtable: old.memtable.clone(),
            frozen: old.frozen.clone(),
            segments,
            global: Arc::new(global),
            stats: Arc::new(stats_map),
        });
        Ok(installed)
    }

    pub fn get(self: &Arc<Self>, key: &KeyValue, snapshot: Option<&Snapshot>) -> Result<Option<Row>> {
        match snapshot {
            Some(snap) => snap.get(key),
            None => self.snapshot().get(key),
        }
    }

    /// All versions with `after < seqno <= upto`, ascending by seqno. Feeds
    /// incremental view maintenance.
    pub fn collect_deltas(self: &Arc<Self>, after: u64, upto: u64) -> Result<Vec<Row>> {
        let snap = self.snapshot();
        let mut out = Vec::new();
        let mut push = |row: Row| {
            if row.seqno > after && row.seqno <= upto {
                out.push(row);
            }
        };
        for row in snap.state.memtable.all_versions_sorted() {
            push(row);
        }
        for frozen in &snap.state.frozen {
            for row in frozen.memtable.all_versions_sorted() {
                push(row);
            }
        }
        for segment in &snap.state.segments {
            if segment.max_seqno <= after {
                continue;
            }
            for row in segment.iter_rows(&self.cache) {
                push(row?);
            }
        }
        out.sort_by_key(|a| a.seqno);
        out.dedup_by(|a, b| a.seqno == b.seqno);
        Ok(out)
    }
}

pub struct Database {
    dir: PathBuf,
    pub options: DatabaseOptions,
    cache: Arc<BlockCache>,
    next_segment_id: Arc<AtomicU64>,
    tables: RwLock<HashMap<String, Arc<Table>>>,
    worker_tx: Mutex<Option<Sender<Job>>>,
    worker: Mutex<Option<std::thread::JoinHandle<()>>>,
}

impl Database {
    pub fn open(dir: impl AsRef<Path>, options: DatabaseOptions) -> Result<Arc<Database>> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(dir.join("tables"))?;
        let cache = Arc::new(BlockCache::new(options.cache_bytes));
        let next_segment_id = Arc::new(AtomicU64::new(1));
        let mut tables = HashMap::new();
        for entry in std::fs::read_dir(dir.join("tables"))? {
            let path = entry?.path();
            if path.is_dir() && path.join("schema.json").exists() {
                let table = Table::open(path, cache.clone(), options.clone(), next_segment_id.clone())?;
                tables.insert(table.name().to_string(), table);
            }
        }
        let db = Arc::new(Database {
            dir,
            options,
            cache,
            next_segment_id,
            tables: RwLock::new(tables),
            worker_tx: Mutex::new(None),
            worker: Mutex::new(None),
        });
        if db.options.background_workers {
            db.start_worker();
        }
        Ok(db)
    }

    fn start_worker(self: &Arc<Self>) {
        let (tx, rx) = unbounded::<Job>();
        for table in self.tables.read().values() {
            *table.flush_tx.lock() = Some(tx.clone());
        }
        *self.worker_tx.lock() = Some(tx);
        let handle = std::thread::Builder::new()
            .name("arcdb-maintenance".into())
            .spawn(move || {
                while let Ok(job) = rx.recv() {
                    match job {
                        Job::Flush(table) => {
                            if table.flush_pending().is_ok() {
                                let _ = table.maybe_compact();
                            }
                        }
                        Job::Shutdown => break,
                    }
                }
            })
            .expect("spawn maintenance worker");
        *self.worker.lock() = Some(handle);
    }

    pub fn create_table(self: &Arc<Self>, schema: TableSchema) -> Result<Arc<Table>> {
        schema.validate()?;
        let mut tables = self.tables.write();
        if tables.contains_key(&schema.table_name) {
            return Err(Error::DuplicateTable(schema.table_name));
        }
        let dir = self.dir.join("tables").join(&schema.table_name);
        let table = Table::create(
            dir,
            schema,
            self.cache.clone(),
            self.options.clone(),
            self.next_segment_id.clone(),
        )?;
        *table.flush_tx.lock() = self.worker_tx.lock().clone();
        tables.insert(table.name().to_string(), table.clone());
        Ok(table)
    }

    pub fn table(&self, name: &str) -> Result<Arc<Table>> {
        self.tables
            .read()
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn table_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.tables.read().keys().cloned().collect();
        names.sort();
        names
    }

    pub fn cache(&self) -> &Arc<BlockCache> {
        &self.cache
    }

    pub fn metrics(&self) -> &CacheMetrics {
        &self.cache.metrics
    }

    /// Flush every table synchronously (used on shutdown).
    pub fn flush_all(&self) -> Result<()> {
        let tables: Vec<Arc<Table>> = self.tables.read().values().cloned().collect();
        for table in tables {
            table.flush_now()?;
        }
        Ok(())
    }
}

impl Drop for Database {
    fn drop(&mut self) {
        if let Some(tx) = self.worker_tx.lock().take() {
            let _ = tx.send(Job::Shutdown);
        }
        if let Some(handle) = self.worker.lock().take() {
            let _ = handle.join();
        }
    }
}
