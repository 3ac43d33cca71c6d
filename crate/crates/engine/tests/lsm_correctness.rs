//! Storage-layer correctness: shadow-map equivalence over random
//! interleavings, snapshot semantics, compaction equivalence, durability
//! via WAL replay, cache transparency, and segment immutability.

use std::collections::BTreeMap;
use std::sync::Arc;

use arcdb::schema::{ColumnKind, TableSchema};
use arcdb::storage::{Database, DatabaseOptions, Table, WalSync};
use arcdb::value::{AttributeValue, KeyValue, Record};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn plain_schema(name: &str) -> TableSchema {
    TableSchema::new(name)
        .column("id", ColumnKind::Int64)
        .column("v", ColumnKind::Int64)
        .column("s", ColumnKind::String)
        .primary_key("id")
}

fn small_opts() -> DatabaseOptions {
    DatabaseOptions {
        cache_bytes: 8 << 20,
        flush_threshold_bytes: 16 << 10,
        wal_sync: WalSync::Disabled,
        background_workers: false,
        ..Default::default()
    }
}

fn record(id: i64, v: i64) -> Record {
    Record::new(id)
        .with("v", AttributeValue::Int(v))
        .with("s", AttributeValue::Str(format!("row-{id}-{v}")))
}

fn row_v(table: &Arc<Table>, row: &arcdb::value::Row) -> i64 {
    let idx = table.schema.column_index("v").unwrap();
    match row.values[idx] {
        AttributeValue::Int(v) => v,
        _ => panic!("unexpected value"),
    }
}

#[test]
fn read_your_write_and_delete_semantics() {
    let dir = tempfile::tempdir().unwrap();
    let db = Database::open(dir.path(), small_opts()).unwrap();
    let table = db.create_table(plain_schema("t")).unwrap();

    table.put(&record(1, 10)).unwrap();
    let got = table.get(&KeyValue::Int(1), None).unwrap().unwrap();
    assert_eq!(row_v(&table, &got), 10);

    table.delete(&KeyValue::Int(1)).unwrap();
    assert!(table.get(&KeyValue::Int(1), None).unwrap().is_none());

    // deleting a key that never existed succeeds and stays absent
    table.delete(&KeyValue::Int(99)).unwrap();
    assert!(table.get(&KeyValue::Int(99), None).unwrap().is_none());
}

#[test]
fn snapshot_pins_pre_delete_state() {
    let dir = tempfile::tempdir().unwrap();
    let db = Database::open(dir.path(), small_opts()).unwrap();
    let table = db.create_table(plain_schema("t")).unwrap();

    table.put(&record(7, 70)).unwrap();
    let snap = table.snapshot();
    table.delete(&KeyValue::Int(7)).unwrap();

    assert!(table.get(&KeyValue::Int(7), None).unwrap().is_none());
    let pinned = table.get(&KeyValue::Int(7), Some(&snap)).unwrap().unwrap();
    assert_eq!(row_v(&table, &pinned), 70);

    // the same holds when the delete has been flushed to a segment
    table.flush_now().unwrap();
    let pinned = table.get(&KeyValue::Int(7), Some(&snap)).unwrap().unwrap();
    assert_eq!(row_v(&table, &pinned), 70);
}

#[test]
fn flush_threshold_produces_multiple_segments() {
    let dir = tempfile::tempdir().unwrap();
    let opts = DatabaseOptions {
        flush_threshold_bytes: 4 << 20,
        background_workers: false,
        wal_sync: WalSync::Disabled,
        compaction_threshold: usize::MAX, // keep L0 segments visible
        ..Default::default()
    };
    let db = Database::open(dir.path(), opts).unwrap();
    let table = db.create_table(plain_schema("t")).unwrap();
    let kib: String = "x".repeat(1024);
    for i in 0..10_000i64 {
        let rec = Record::new(i)
            .with("v", AttributeValue::Int(i))
            .with("s", AttributeValue::Str(kib.clone()));
        table.put(&rec).unwrap();
    }
    table.flush_now().unwrap();
    let segments = table.snapshot().state.segments.len();
    assert!(segments >= 2, "expected >= 2 segments, got {segments}");
    assert_eq!(table.snapshot().scan().unwrap().len(), 10_000);
}

#[test]
fn compaction_resolves_duplicates_and_tombstones() {
    let dir = tempfile::tempdir().unwrap();
    let db = Database::open(dir.path(), small_opts()).unwrap();
    let table = db.create_table(plain_schema("t")).unwrap();

    table.put(&record(1, 100)).unwrap(); // seqno 1
    table.put(&record(2, 200)).unwrap();
    table.flush_now().unwrap();
    table.put(&record(1, 111)).unwrap(); // newer version shadows
    table.delete(&KeyValue::Int(2)).unwrap();
    table.flush_now().unwrap();

    let inputs: Vec<_> = table.snapshot().state.segments.to_vec();
    assert_eq!(inputs.len(), 2);
    let output = table.compact(&inputs).unwrap().unwrap();
    assert_eq!(output.level, 1);

    // all segments merged: tombstone for key 2 must be gone entirely
    let snap = table.snapshot();
    assert_eq!(snap.state.segments.len(), 1);
    let rows = snap.scan().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].key, KeyValue::Int(1));
    assert_eq!(row_v(&table, &rows[0]), 111);
    assert_eq!(output.row_count, 1, "tombstone dropped in full-overlap compaction");
}

#[test]
fn full_scan_identical_before_and_after_compaction() {
    let dir = tempfile::tempdir().unwrap();
    let db = Database::open(dir.path(), small_opts()).unwrap();
    let table = db.create_table(plain_schema("t")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);

    for _ in 0..1200 {
        let id = rng.random_range(0..300i64);
        if rng.random_bool(0.15) {
            table.delete(&KeyValue::Int(id)).unwrap();
        } else {
            table.put(&record(id, rng.random_range(0..10_000))).unwrap();
        }
        if rng.random_bool(0.01) {
            table.flush_now().unwrap();
        }
    }
    table.flush_now().unwrap();

    let before: Vec<(KeyValue, i64)> = table
        .snapshot()
        .scan()
        .unwrap()
        .iter()
        .map(|r| (r.key.clone(), row_v(&table, r)))
        .collect();
    let inputs: Vec<_> = table.snapshot().state.segments.to_vec();
    table.compact(&inputs).unwrap();
    let after: Vec<(KeyValue, i64)> = table
        .snapshot()
        .scan()
        .unwrap()
        .iter()
        .map(|r| (r.key.clone(), row_v(&table, r)))
        .collect();
    assert_eq!(before, after);

    // a key that lives in the compacted segment reads the same value
    if let Some((key, v)) = before.first() {
        let got = table.get(key, None).unwrap().unwrap();
        assert_eq!(row_v(&table, &got), *v);
    }
}

/// Shadow-map equivalence over random put/delete/flush/compact
/// interleavings, checked at live state and at pinned snapshots.
#[test]
fn random_interleavings_match_shadow_map() {
    let dir = tempfile::tempdir().unwrap();
    let db = Database::open(dir.path(), small_opts()).unwrap();
    let table = db.create_table(plain_schema("t")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    let mut shadow: BTreeMap<i64, i64> = BTreeMap::new();
    let mut pinned: Vec<(arcdb::storage::Snapshot, BTreeMap<i64, i64>)> = Vec::new();

    for op in 0..3000 {
        let id = rng.random_range(0..400i64);
        match rng.random_range(0..100) {
            0..=69 => {
                let v = rng.random_range(0..1_000_000);
                table.put(&record(id, v)).unwrap();
                shadow.insert(id, v);
            }
            70..=84 => {
                table.delete(&KeyValue::Int(id)).unwrap();
                shadow.remove(&id);
            }
            85..=92 => {
                let got = table.get(&KeyValue::Int(id), None).unwrap();
                assert_eq!(got.map(|r| row_v(&table, &r)), shadow.get(&id).copied(), "op {op}");
            }
            93..=96 => {
                table.flush_now().unwrap();
            }
            97..=98 => {
                table.maybe_compact().unwrap();
            }
            _ => {
                pinned.push((table.snapshot(), shadow.clone()));
            }
        }
    }
    table.flush_now().unwrap();
    table.maybe_compact().unwrap();

    let live: BTreeMap<i64, i64> = table
        .snapshot()
        .scan()
        .unwrap()
        .iter()
        .map(|r| (r.key.as_int().unwrap(), row_v(&table, r)))
        .collect();
    assert_eq!(live, shadow);

    for (snap, expected) in pinned {
        let got: BTreeMap<i64, i64> = snap
            .scan()
            .unwrap()
            .iter()
            .map(|r| (r.key.as_int().unwrap(), row_v(&table, r)))
            .collect();
        assert_eq!(got, expected, "snapshot at seqno {}", snap.seqno);
    }
}

/// Replaying the write log after an unclean shutdown reproduces exactly the
/// pre-crash visible state.
#[test]
fn wal_replay_restores_state_after_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let mut shadow: BTreeMap<i64, i64> = BTreeMap::new();
    {
        let db = Database::open(dir.path(), small_opts()).unwrap();
        let table = db.create_table(plain_schema("t")).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..800 {
            let id = rng.random_range(0..100i64);
            if rng.random_bool(0.2) {
                table.delete(&KeyValue::Int(id)).unwrap();
                shadow.remove(&id);
            } else {
                let v = rng.random_range(0..9999);
                table.put(&record(id, v)).unwrap();
                shadow.insert(id, v);
            }
            if rng.random_bool(0.005) {
                table.flush_now().unwrap();
            }
        }
        // dropped without a final flush: memtable contents live only in WAL
    }
    let db = Database::open(dir.path(), small_opts()).unwrap();
    let table = db.table("t").unwrap();
    let got: BTreeMap<i64, i64> = table
        .snapshot()
        .scan()
        .unwrap()
        .iter()
        .map(|r| (r.key.as_int().unwrap(), row_v(&table, r)))
        .collect();
    assert_eq!(got, shadow);
}

/// Results are byte-identical with cache capacity 0 and effectively
/// unbounded capacity.
#[test]
fn cache_capacity_never_changes_results() {
    let run = |cache_bytes: usize| -> Vec<(KeyValue, i64)> {
        let dir = tempfile::tempdir().unwrap();
        let opts = DatabaseOptions {
            cache_bytes,
            ..small_opts()
        };
        let db = Database::open(dir.path(), opts).unwrap();
        let table = db.create_table(plain_schema("t")).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..1000 {
            let id = rng.random_range(0..200i64);
            table.put(&record(id, rng.random_range(0..5000))).unwrap();
            if rng.random_bool(0.01) {
                table.flush_now().unwrap();
            }
        }
        table.flush_now().unwrap();
        table
            .snapshot()
            .scan()
            .unwrap()
            .iter()
            .map(|r| (r.key.clone(), row_v(&table, r)))
            .collect()
    };
    assert_eq!(run(0), run(1 << 30));
}

/// Segment files never change after their footer is written.
#[test]
fn segment_files_immutable_after_creation() {
    let dir = tempfile::tempdir().unwrap();
    let db = Database::open(dir.path(), small_opts()).unwrap();
    let table = db.create_table(plain_schema("t")).unwrap();
    for i in 0..500i64 {
        table.put(&record(i, i * 2)).unwrap();
    }
    table.flush_now().unwrap();

    let paths: Vec<std::path::PathBuf> = table
        .snapshot()
        .state
        .segments
        .iter()
        .map(|s| s.path.clone())
        .collect();
    let digest = |p: &std::path::Path| -> u32 { crc32c::crc32c(&std::fs::read(p).unwrap()) };
    let before: Vec<u32> = paths.iter().map(|p| digest(p)).collect();

    // reads, more writes, another flush: existing files must not move
    for i in 0..500i64 {
        table.get(&KeyValue::Int(i), None).unwrap();
    }
    for i in 500..700i64 {
        table.put(&record(i, i)).unwrap();
    }
    table.flush_now().unwrap();
    let after: Vec<u32> = paths.iter().map(|p| digest(p)).collect();
    assert_eq!(before, after);
}

#[test]
fn corrupted_block_surfaces_checksum_error() {
    let dir = tempfile::tempdir().unwrap();
    let db = Database::open(dir.path(), small_opts()).unwrap();
    let table = db.create_table(plain_schema("t")).unwrap();
    for i in 0..200i64 {
        table.put(&record(i, i)).unwrap();
    }
    table.flush_now().unwrap();
    let snap = table.snapshot();
    let segment = snap.state.segments[0].clone();
    let handle = segment.data_blocks[0].handle;

    // flip one payload byte on disk
    let mut bytes = std::fs::read(&segment.path).unwrap();
    bytes[handle.offset as usize + 3] ^= 0x01;
    std::fs::write(&segment.path, bytes).unwrap();

    let cold = arcdb::storage::BlockCache::new(0);
    let err = segment.read_block(handle, &cold).unwrap_err();
    assert!(matches!(err, arcdb::Error::Corruption { .. }), "got {err}");
}

/// Two tables sharing one block cache must never serve each other's blocks;
/// segment ids are database-global so cache keys cannot collide.
#[test]
fn shared_cache_isolates_tables() {
    let dir = tempfile::tempdir().unwrap();
    let db = Database::open(dir.path(), small_opts()).unwrap();
    let a = db.create_table(plain_schema("a")).unwrap();
    let b = db.create_table(plain_schema("b")).unwrap();
    for i in 0..300i64 {
        a.put(&record(i, i)).unwrap();
        b.put(&record(i, i + 1_000_000)).unwrap();
    }
    a.flush_now().unwrap();
    b.flush_now().unwrap();

    // interleave scans so each table's blocks pass through the cache
    let scan_a: Vec<i64> = a.snapshot().scan().unwrap().iter().map(|r| row_v(&a, r)).collect();
    let scan_b: Vec<i64> = b.snapshot().scan().unwrap().iter().map(|r| row_v(&b, r)).collect();
    let scan_a2: Vec<i64> = a.snapshot().scan().unwrap().iter().map(|r| row_v(&a, r)).collect();
    assert_eq!(scan_a, (0..300).collect::<Vec<i64>>());
    assert_eq!(scan_b, (1_000_000..1_000_300).collect::<Vec<i64>>());
    assert_eq!(scan_a, scan_a2);

    let ids_a: Vec<u64> = a.snapshot().state.segments.iter().map(|s| s.id).collect();
    let ids_b: Vec<u64> = b.snapshot().state.segments.iter().map(|s| s.id).collect();
    for id in &ids_a {
        assert!(!ids_b.contains(id), "segment id {id} reused across tables");
    }
}

#[test]
fn duplicate_table_and_unknown_table_errors() {
    let dir = tempfile::tempdir().unwrap();
    let db = Database::open(dir.path(), small_opts()).unwrap();
    db.create_table(plain_schema("t")).unwrap();
    assert!(matches!(
        db.create_table(plain_schema("t")),
        Err(arcdb::Error::DuplicateTable(_))
    ));
    assert!(matches!(db.table("missing"), Err(arcdb::Error::UnknownTable(_))));
}

/// Readers never observe a key's value moving backwards while a writer
/// updates it and flushes race in the background.
#[test]
fn concurrent_readers_see_monotone_versions() {
    let dir = tempfile::tempdir().unwrap();
    let opts = DatabaseOptions {
        flush_threshold_bytes: 128 << 10,
        background_workers: true,
        wal_sync: WalSync::Disabled,
        ..Default::default()
    };
    let db = Database::open(dir.path(), opts).unwrap();
    let table = db.create_table(plain_schema("t")).unwrap();
    table.put(&record(1, 0)).unwrap();

    let stop = Arc::new(std::sync::atomic::AtomicBool::new(false));
    let mut readers = Vec::new();
    for _ in 0..2 {
        let table = table.clone();
        let stop = stop.clone();
        readers.push(std::thread::spawn(move || {
            let mut last = -1i64;
            let mut observed = 0u64;
            while !stop.load(std::sync::atomic::Ordering::Relaxed) {
                let row = table.get(&KeyValue::Int(1), None).unwrap().unwrap();
                let idx = table.schema.column_index("v").unwrap();
                let v = match row.values[idx] {
                    AttributeValue::Int(v) => v,
                    _ => unreachable!(),
                };
                assert!(v >= last, "value went backwards: {last} -> {v}");
                last = v;
                observed += 1;
                std::thread::sleep(std::time::Duration::from_micros(500));
            }
            observed
        }));
    }
    for v in 1..1500i64 {
        table.put(&record(1, v)).unwrap();
        // interleave other keys so flushes trigger
        table.put(&record(v % 97 + 100, v)).unwrap();
    }
    stop.store(true, std::sync::atomic::Ordering::Relaxed);
    for reader in readers {
        let observed = reader.join().unwrap();
        assert!(observed > 0);
    }
    table.flush_now().unwrap();
    let final_row = table.get(&KeyValue::Int(1), None).unwrap().unwrap();
    let idx = table.schema.column_index("v").unwrap();
    assert_eq!(final_row.values[idx], AttributeValue::Int(1499));
}

#[test]
fn background_worker_flushes_without_blocking_writes() {
    let dir = tempfile::tempdir().unwrap();
    let opts = DatabaseOptions {
        flush_threshold_bytes: 32 << 10,
        background_workers: true,
        wal_sync: WalSync::Disabled,
        ..Default::default()
    };
    let db = Database::open(dir.path(), opts).unwrap();
    let table = db.create_table(plain_schema("t")).unwrap();
    for i in 0..5000i64 {
        table.put(&record(i, i)).unwrap();
    }
    // wait for the worker to drain
    for _ in 0..200 {
        if table.snapshot().state.frozen.is_empty() {
            break;
        }
        std::thread::sleep(std::time::Duration::from_millis(10));
    }
    table.flush_now().unwrap();
    assert_eq!(table.snapshot().scan().unwrap().len(), 5000);
    assert!(!table.snapshot().state.segments.is_empty());
}
