//! Hybrid query layer: plan enumeration, cross-plan result equality against
//! an independent naive evaluator, cost-model behavior, multi-index wins,
//! and rank execution through the whole engine.

use std::collections::HashSet;
use std::sync::Arc;

use arcdb::query::{
    execute, plans_for, Modality, PlanNode, Predicate, QueryOptions, QuerySpec, RankQueryValue,
    RankSpec, RankTerm, ScalarBound,
};
use arcdb::schema::{ColumnKind, IndexKind, TableSchema};
use arcdb::storage::{Database, DatabaseOptions, Table, WalSync};
use arcdb::value::{AttributeValue, GeometryValue, KeyValue, Record};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

const DIM: usize = 8;
const N_CENTROIDS: usize = 8;

fn schema(name: &str) -> TableSchema {
    TableSchema::new(name)
        .column("id", ColumnKind::Int64)
        .column("time", ColumnKind::Timestamp)
        .column("embedding", ColumnKind::Vector { dim: DIM })
        .column("loc", ColumnKind::Geometry)
        .column("content", ColumnKind::Text)
        .primary_key("id")
        .index("time", IndexKind::Btree)
        .index("embedding", IndexKind::Ivf { n_centroids: N_CENTROIDS })
        .index("loc", IndexKind::Spatial)
        .index("content", IndexKind::Inverted)
}

fn opts() -> DatabaseOptions {
    DatabaseOptions {
        flush_threshold_bytes: 256 << 10,
        background_workers: false,
        wal_sync: WalSync::Disabled,
        compaction_threshold: usize::MAX,
        ..Default::default()
    }
}

const WORDS: &[&str] = &["storm", "sunny", "flood", "calm", "heat", "wind", "rain", "snow"];

struct Fixture {
    _dir: tempfile::TempDir,
    _db: Arc<Database>,
    table: Arc<Table>,
    rows: Vec<(i64, i64, Vec<f32>, (f64, f64), String)>,
}

fn build_fixture(n: usize, segments: usize, seed: u64) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let db = Database::open(dir.path(), opts()).unwrap();
    let table = db.create_table(schema("tweets")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let time = rng.random_range(0..10_000i64);
        let embedding: Vec<f32> = (0..DIM).map(|_| rng.random::<f32>() * 4.0).collect();
        let point = (rng.random_range(-90.0..90.0), rng.random_range(-45.0..45.0));
        let text = format!(
            "{} {} {}",
            WORDS[rng.random_range(0..WORDS.len())],
            WORDS[rng.random_range(0..WORDS.len())],
            WORDS[rng.random_range(0..WORDS.len())]
        );
        let rec = Record::new(i as i64)
            .with("time", AttributeValue::Int(time))
            .with("embedding", AttributeValue::Vector(embedding.clone()))
            .with("loc", AttributeValue::Geometry(GeometryValue::point(point.0, point.1)))
            .with("content", AttributeValue::Str(text.clone()));
        table.put(&rec).unwrap();
        rows.push((i as i64, time, embedding, point, text));
        if (i + 1) % (n / segments).max(1) == 0 {
            table.flush_now().unwrap();
        }
    }
    table.flush_now().unwrap();
    Fixture {
        _dir: dir,
        _db: db,
        table,
        rows,
    }
}

/// Independent oracle: direct predicate evaluation over the raw fixture
/// data, no engine code in the loop.
fn naive_eval(fixture: &Fixture, filters: &[Predicate]) -> HashSet<i64> {
    fixture
        .rows
        .iter()
        .filter(|(_, time, embedding, point, text)| {
            filters.iter().all(|pred| match pred {
                Predicate::ScalarRange { lo, hi, .. } => {
                    let (ScalarBound::Num(lo), ScalarBound::Num(hi)) = (lo, hi) else {
                        return false;
                    };
                    (*time as f64) >= *lo && (*time as f64) <= *hi
                }
                Predicate::VectorThreshold { query, threshold, .. } => {
                    let d2: f32 = embedding
                        .iter()
                        .zip(query)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    ((d2 as f64).sqrt()) < *threshold
                }
                Predicate::SpatialContains { region, .. } => region.contains_point(point.0, point.1),
                Predicate::Keyword { term, .. } => text.split(' ').any(|w| w == term),
            })
        })
        .map(|(id, ..)| *id)
        .collect()
}

fn random_filters(rng: &mut ChaCha8Rng) -> Vec<Predicate> {
    let mut filters = Vec::new();
    if rng.random_bool(0.7) {
        let lo = rng.random_range(0..8000i64);
        filters.push(Predicate::ScalarRange {
            column: "time".into(),
            lo: ScalarBound::Num(lo as f64),
            hi: ScalarBound::Num((lo + rng.random_range(100..4000)) as f64),
        });
    }
    if rng.random_bool(0.5) {
        let q: Vec<f32> = (0..DIM).map(|_| rng.random::<f32>() * 4.0).collect();
        filters.push(Predicate::VectorThreshold {
            column: "embedding".into(),
            query: q,
            threshold: rng.random_range(1.0..3.0),
        });
    }
    if rng.random_bool(0.6) {
        let x = rng.random_range(-90.0..40.0);
        let y = rng.random_range(-45.0..20.0);
        filters.push(Predicate::SpatialContains {
            column: "loc".into(),
            region: GeometryValue::rect(x, y, x + rng.random_range(5.0..70.0), y + rng.random_range(5.0..40.0)),
        });
    }
    if rng.random_bool(0.5) {
        filters.push(Predicate::Keyword {
            column: "content".into(),
            term: WORDS[rng.random_range(0..WORDS.len())].to_string(),
        });
    }
    if filters.is_empty() {
        filters.push(Predicate::ScalarRange {
            column: "time".into(),
            lo: ScalarBound::Num(0.0),
            hi: ScalarBound::Num(10_000.0),
        });
    }
    filters
}

#[test]
fn plan_enumeration_shapes() {
    let fixture = build_fixture(500, 2, 61);
    let snap = fixture.table.snapshot();

    // two servable predicates: scan + 2 single-index + 1 intersect
    let spec = QuerySpec::filter_only(
        "tweets",
        vec![
            Predicate::ScalarRange {
                column: "time".into(),
                lo: ScalarBound::Num(0.0),
                hi: ScalarBound::Num(100.0),
            },
            Predicate::Keyword {
                column: "content".into(),
                term: "storm".into(),
            },
        ],
    );
    let plans = plans_for(&snap, &spec).unwrap();
    assert!(plans.len() >= 4, "got {} plans", plans.len());
    assert_eq!(
        plans
            .iter()
            .filter(|p| matches!(p.plan, PlanNode::FullScan { .. }))
            .count(),
        1
    );
    assert_eq!(
        plans
            .iter()
            .filter(|p| matches!(p.plan, PlanNode::IndexFilter { .. }))
            .count(),
        2
    );
    assert_eq!(
        plans
            .iter()
            .filter(|p| matches!(p.plan, PlanNode::IndexIntersect { .. }))
            .count(),
        1
    );

    // rank-only query: NraTopK and the scan-sort fallback
    let rank_spec = QuerySpec {
        table: "tweets".into(),
        select: vec![],
        filters: vec![],
        rank: Some(RankSpec {
            terms: vec![RankTerm {
                modality: Modality::Vector,
                column: "embedding".into(),
                query: RankQueryValue::Vector(vec![1.0; DIM]),
                weight: 1.0,
            }],
            k: 5,
        }),
        mode: Default::default(),
        options: Default::default(),
    };
    let plans = plans_for(&snap, &rank_spec).unwrap();
    assert!(plans.iter().any(|p| matches!(p.plan, PlanNode::NraTopK { .. })));
    assert!(plans.iter().any(|p| matches!(p.plan, PlanNode::ScanSort)));

    // costs are non-negative everywhere
    for plan in &plans {
        assert!(plan.estimated_cost >= 0.0);
    }
}

/// The cost model instantiates the stated formula for full scans.
#[test]
fn full_scan_cost_formula_instantiation() {
    let fixture = build_fixture(700, 2, 60);
    let snap = fixture.table.snapshot();
    let spec = QuerySpec::filter_only(
        "tweets",
        vec![
            Predicate::ScalarRange {
                column: "time".into(),
                lo: ScalarBound::Num(0.0),
                hi: ScalarBound::Num(100.0),
            },
            Predicate::Keyword {
                column: "content".into(),
                term: "storm".into(),
            },
        ],
    );
    let plans = plans_for(&snap, &spec).unwrap();
    let scan = plans
        .iter()
        .find(|p| matches!(p.plan, PlanNode::FullScan { .. }))
        .unwrap();
    let n: u64 = snap
        .state
        .segments
        .iter()
        .filter_map(|s| snap.state.stats.get(&s.id))
        .map(|s| s.row_count)
        .sum();
    let data_blocks: usize = snap.state.segments.iter().map(|s| s.data_blocks.len()).sum();
    // cost = N·(C_key + |filters|·C_res) + data_blocks·C_blk
    let want = n as f64 * (0.02 + 2.0 * 0.005) + data_blocks as f64 * 1.0;
    assert!(
        (scan.estimated_cost - want).abs() < 1e-9,
        "cost {} != formula {want}",
        scan.estimated_cost
    );
}

/// Every enumerated plan returns exactly the naive evaluator's rows.
#[test]
fn cross_plan_equality_on_random_specs() {
    let fixture = build_fixture(2000, 4, 62);
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    for trial in 0..40 {
        let filters = random_filters(&mut rng);
        let want = naive_eval(&fixture, &filters);
        let spec = QuerySpec::filter_only("tweets", filters);
        let snap = fixture.table.snapshot();
        let plans = plans_for(&snap, &spec).unwrap();
        for costed in &plans {
            let (rows, _) = arcdb::query::run_plan(&snap, &spec, costed).unwrap();
            let got: HashSet<i64> = rows.iter().map(|r| r.key.as_int().unwrap()).collect();
            assert_eq!(
                got,
                want,
                "trial {trial}: plan {} diverges from naive evaluator",
                costed.plan.describe(&spec)
            );
        }
    }
}

/// Optimizer picks the intersect plan for two highly selective predicates
/// and its physical reads beat the best single-index plan.
#[test]
fn multi_index_intersection_wins() {
    let dir = tempfile::tempdir().unwrap();
    // single segment: per-segment leg overhead must not mask the win
    let one_segment = DatabaseOptions {
        flush_threshold_bytes: 64 << 20,
        ..opts()
    };
    let db = Database::open(dir.path(), one_segment).unwrap();
    let table = db.create_table(schema("tweets")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let n = 20_000usize;
    for i in 0..n {
        // ~1% selectivity each: time in [0,100) of 10_000, keyword "storm" 1-in-100
        let time = rng.random_range(0..10_000i64);
        let word = if rng.random_range(0..100) == 0 { "storm" } else { "calm" };
        let rec = Record::new(i as i64)
            .with("time", AttributeValue::Int(time))
            .with(
                "embedding",
                AttributeValue::Vector((0..DIM).map(|_| rng.random::<f32>()).collect()),
            )
            .with(
                "loc",
                AttributeValue::Geometry(GeometryValue::point(
                    rng.random_range(-90.0..90.0),
                    rng.random_range(-45.0..45.0),
                )),
            )
            .with("content", AttributeValue::Str(format!("{word} filler words")));
        table.put(&rec).unwrap();
    }
    table.flush_now().unwrap();

    let filters = vec![
        Predicate::ScalarRange {
            column: "time".into(),
            lo: ScalarBound::Num(0.0),
            hi: ScalarBound::Num(99.0),
        },
        Predicate::Keyword {
            column: "content".into(),
            term: "storm".into(),
        },
    ];
    let spec = QuerySpec::filter_only("tweets", filters);
    let snap = table.snapshot();
    let plans = plans_for(&snap, &spec).unwrap();
    let chosen = &plans[arcdb::query::choose_plan(&plans)];
    assert!(
        matches!(chosen.plan, PlanNode::IndexIntersect { .. }),
        "optimizer chose {}",
        chosen.plan.describe(&spec)
    );

    // measure physical reads per plan from a cold cache
    let mut measured: Vec<(String, u64, HashSet<i64>)> = Vec::new();
    for costed in &plans {
        snap.cache.clear();
        let before = snap.cache.metrics.physical_reads();
        let (rows, _) = arcdb::query::run_plan(&snap, &spec, costed).unwrap();
        let reads = snap.cache.metrics.physical_reads() - before;
        measured.push((
            costed.plan.describe(&spec),
            reads,
            rows.iter().map(|r| r.key.as_int().unwrap()).collect(),
        ));
    }
    let sets: Vec<&HashSet<i64>> = measured.iter().map(|(_, _, s)| s).collect();
    for s in &sets[1..] {
        assert_eq!(*s, sets[0], "plans disagree");
    }
    let intersect_reads = measured
        .iter()
        .find(|(name, _, _)| name.starts_with("IndexIntersect"))
        .map(|(_, reads, _)| *reads)
        .unwrap();
    let best_single = measured
        .iter()
        .filter(|(name, _, _)| name.starts_with("IndexFilter"))
        .map(|(_, reads, _)| *reads)
        .min()
        .unwrap();
    assert!(
        intersect_reads * 2 <= best_single,
        "intersect reads {intersect_reads} not <= 0.5 × best single {best_single}"
    );
}

/// The worked query shape: vector threshold + keyword + region, executed by
/// the chosen plan, equals the naive evaluation.
#[test]
fn hybrid_search_query_shape_end_to_end() {
    let fixture = build_fixture(3000, 3, 65);
    let q: Vec<f32> = vec![2.0; DIM];
    let filters = vec![
        Predicate::VectorThreshold {
            column: "embedding".into(),
            query: q,
            threshold: 2.2,
        },
        Predicate::Keyword {
            column: "content".into(),
            term: "storm".into(),
        },
        Predicate::SpatialContains {
            column: "loc".into(),
            region: GeometryValue::rect(-90.0, -45.0, 30.0, 30.0),
        },
    ];
    let want = naive_eval(&fixture, &filters);
    let spec = QuerySpec::filter_only("tweets", filters);
    let (rows, report) = execute(&fixture.table, &spec).unwrap();
    let got: HashSet<i64> = rows.iter().map(|r| r.key.as_int().unwrap()).collect();
    assert_eq!(got, want);
    assert!(report.actual_rows as usize == want.len());
}

#[test]
fn empty_table_returns_empty_for_any_spec() {
    let dir = tempfile::tempdir().unwrap();
    let db = Database::open(dir.path(), opts()).unwrap();
    let table = db.create_table(schema("tweets")).unwrap();
    let spec = QuerySpec::filter_only(
        "tweets",
        vec![Predicate::Keyword {
            column: "content".into(),
            term: "anything".into(),
        }],
    );
    let (rows, _) = execute(&table, &spec).unwrap();
    assert!(rows.is_empty());
}

/// NRA with full-probe vector sources equals the scan-sort fallback, and
/// with pre-filters both agree too.
#[test]
fn rank_plans_agree_under_full_probe() {
    let fixture = build_fixture(1500, 3, 66);
    let mut rng = ChaCha8Rng::seed_from_u64(67);
    for trial in 0..10 {
        let q: Vec<f32> = (0..DIM).map(|_| rng.random::<f32>() * 4.0).collect();
        let point = [rng.random_range(-50.0..50.0), rng.random_range(-30.0..30.0)];
        let with_filter = rng.random_bool(0.5);
        let mut filters = Vec::new();
        if with_filter {
            filters.push(Predicate::ScalarRange {
                column: "time".into(),
                lo: ScalarBound::Num(0.0),
                hi: ScalarBound::Num(6000.0),
            });
        }
        let spec = QuerySpec {
            table: "tweets".into(),
            select: vec![],
            filters,
            rank: Some(RankSpec {
                terms: vec![
                    RankTerm {
                        modality: Modality::Vector,
                        column: "embedding".into(),
                        query: RankQueryValue::Vector(q.clone()),
                        weight: rng.random_range(0.5..2.0),
                    },
                    RankTerm {
                        modality: Modality::Spatial,
                        column: "loc".into(),
                        query: RankQueryValue::Point(point),
                        weight: rng.random_range(0.01..0.05),
                    },
                ],
                k: 10,
            }),
            mode: Default::default(),
            options: QueryOptions {
                n_probe: Some(N_CENTROIDS), // full probe: exact universe
                ..Default::default()
            },
        };
        let nra = QuerySpec {
            options: QueryOptions {
                n_probe: Some(N_CENTROIDS),
                force_plan: Some("nra".into()),
                ..Default::default()
            },
            ..spec.clone()
        };
        let scan = QuerySpec {
            options: QueryOptions {
                n_probe: Some(N_CENTROIDS),
                force_plan: Some("scan_sort".into()),
                ..Default::default()
            },
            ..spec.clone()
        };
        let (nra_rows, nra_report) = execute(&fixture.table, &nra).unwrap();
        let (scan_rows, _) = execute(&fixture.table, &scan).unwrap();
        let nra_keys: Vec<i64> = nra_rows.iter().map(|r| r.key.as_int().unwrap()).collect();
        let scan_keys: Vec<i64> = scan_rows.iter().map(|r| r.key.as_int().unwrap()).collect();
        assert_eq!(nra_keys, scan_keys, "trial {trial}");
        for (a, b) in nra_rows.iter().zip(&scan_rows) {
            assert!((a.score.unwrap() - b.score.unwrap()).abs() < 1e-9);
        }
        assert!(nra_report.consumed_entries.is_some());
    }
}

/// Unseen rows in the memtable are part of every query's answer.
#[test]
fn memtable_overlay_visible_to_index_plans() {
    let fixture = build_fixture(800, 2, 68);
    // new rows NOT flushed
    for i in 0..20i64 {
        let rec = Record::new(100_000 + i)
            .with("time", AttributeValue::Int(50))
            .with("embedding", AttributeValue::Vector(vec![0.5; DIM]))
            .with("loc", AttributeValue::Geometry(GeometryValue::point(0.5, 0.5)))
            .with("content", AttributeValue::Str("storm overlay".into()));
        fixture.table.put(&rec).unwrap();
    }
    let spec = QuerySpec {
        options: QueryOptions {
            force_plan: Some("index:time".into()),
            ..Default::default()
        },
        ..QuerySpec::filter_only(
            "tweets",
            vec![Predicate::ScalarRange {
                column: "time".into(),
                lo: ScalarBound::Num(50.0),
                hi: ScalarBound::Num(50.0),
            }],
        )
    };
    let (rows, _) = execute(&fixture.table, &spec).unwrap();
    let got: HashSet<i64> = rows.iter().map(|r| r.key.as_int().unwrap()).collect();
    for i in 0..20i64 {
        assert!(got.contains(&(100_000 + i)), "memtable row missing");
    }
}

/// Deterministic ordering and weight-scaling invariance through the engine.
#[test]
fn weight_scaling_preserves_rank_order() {
    let fixture = build_fixture(600, 2, 69);
    let q: Vec<f32> = vec![1.5; DIM];
    let make = |scale: f64| QuerySpec {
        table: "tweets".into(),
        select: vec![],
        filters: vec![],
        rank: Some(RankSpec {
            terms: vec![
                RankTerm {
                    modality: Modality::Vector,
                    column: "embedding".into(),
                    query: RankQueryValue::Vector(q.clone()),
                    weight: 1.0 * scale,
                },
                RankTerm {
                    modality: Modality::Spatial,
                    column: "loc".into(),
                    query: RankQueryValue::Point([10.0, 10.0]),
                    weight: 0.02 * scale,
                },
            ],
            k: 7,
        }),
        mode: Default::default(),
        options: QueryOptions {
            n_probe: Some(N_CENTROIDS),
            ..Default::default()
        },
    };
    let (a, _) = execute(&fixture.table, &make(1.0)).unwrap();
    let (b, _) = execute(&fixture.table, &make(13.7)).unwrap();
    let ka: Vec<i64> = a.iter().map(|r| r.key.as_int().unwrap()).collect();
    let kb: Vec<i64> = b.iter().map(|r| r.key.as_int().unwrap()).collect();
    assert_eq!(ka, kb);
}

/// Text-ranked NN over one segment agrees with the independent tf-idf
/// scorer.
#[test]
fn text_ranked_nn_matches_corpus_scorer() {
    let dir = tempfile::tempdir().unwrap();
    let db = Database::open(dir.path(), opts()).unwrap();
    let table = db.create_table(schema("tweets")).unwrap();
    let texts = [
        "storm storm flood",
        "storm watch",
        "calm sunny skies",
        "flood warning storm",
        "sunny flood plain",
        "wind and rain",
    ];
    for (i, text) in texts.iter().enumerate() {
        let rec = Record::new(i as i64)
            .with("time", AttributeValue::Int(0))
            .with("embedding", AttributeValue::Vector(vec![0.0; DIM]))
            .with("loc", AttributeValue::Geometry(GeometryValue::point(0.0, 0.0)))
            .with("content", AttributeValue::Str(text.to_string()));
        table.put(&rec).unwrap();
    }
    table.flush_now().unwrap();

    let spec = QuerySpec {
        table: "tweets".into(),
        select: vec![],
        filters: vec![],
        rank: Some(RankSpec {
            terms: vec![RankTerm {
                modality: Modality::Text,
                column: "content".into(),
                query: RankQueryValue::Terms("storm flood".into()),
                weight: 1.0,
            }],
            k: 4,
        }),
        mode: Default::default(),
        options: Default::default(),
    };
    let (rows, _) = execute(&table, &spec).unwrap();
    let got: Vec<i64> = rows.iter().map(|r| r.key.as_int().unwrap()).collect();

    let docs: Vec<(KeyValue, &str)> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| (KeyValue::Int(i as i64), *t))
        .collect();
    let want: Vec<i64> = arcdb::text::score_corpus(&docs, &["storm".into(), "flood".into()])
        .into_iter()
        .take(4)
        .map(|(k, _)| k.as_int().unwrap())
        .collect();
    assert_eq!(got, want);
}

/// `--explain`-style report carries plan and counter details; forcing an
/// absent plan errors.
#[test]
fn explain_report_and_force_plan_validation() {
    let fixture = build_fixture(400, 2, 70);
    let spec = QuerySpec::filter_only(
        "tweets",
        vec![Predicate::Keyword {
            column: "content".into(),
            term: "storm".into(),
        }],
    );
    let (_, report) = execute(&fixture.table, &spec).unwrap();
    let text = arcdb::query::render_explain(&report);
    assert!(text.contains("plan:"));
    assert!(text.contains("block_reads"));

    let bad = QuerySpec {
        options: QueryOptions {
            force_plan: Some("intersect:loc+time".into()),
            ..Default::default()
        },
        ..spec
    };
    assert!(execute(&fixture.table, &bad).is_err());
    let _ = fixture.rows.len();
}

/// Rows shadowed mid-table: rank results only ever surface the newest
/// visible version.
#[test]
fn rank_respects_version_visibility() {
    let dir = tempfile::tempdir().unwrap();
    let db = Database::open(dir.path(), opts()).unwrap();
    let table = db.create_table(schema("tweets")).unwrap();
    let q = vec![0.0f32; DIM];
    // old version: embedding exactly at the query point
    let rec = Record::new(1)
        .with("time", AttributeValue::Int(0))
        .with("embedding", AttributeValue::Vector(vec![0.0; DIM]))
        .with("loc", AttributeValue::Geometry(GeometryValue::point(0.0, 0.0)))
        .with("content", AttributeValue::Str("x".into()));
    table.put(&rec).unwrap();
    table.flush_now().unwrap();
    // new version: far away
    let rec = Record::new(1)
        .with("time", AttributeValue::Int(0))
        .with("embedding", AttributeValue::Vector(vec![9.0; DIM]))
        .with("loc", AttributeValue::Geometry(GeometryValue::point(0.0, 0.0)))
        .with("content", AttributeValue::Str("x".into()));
    table.put(&rec).unwrap();
    table.flush_now().unwrap();
    // competitor at middle distance
    let rec = Record::new(2)
        .with("time", AttributeValue::Int(0))
        .with("embedding", AttributeValue::Vector(vec![1.0; DIM]))
        .with("loc", AttributeValue::Geometry(GeometryValue::point(0.0, 0.0)))
        .with("content", AttributeValue::Str("x".into()));
    table.put(&rec).unwrap();
    table.flush_now().unwrap();

    let spec = QuerySpec {
        table: "tweets".into(),
        select: vec![],
        filters: vec![],
        rank: Some(RankSpec {
            terms: vec![RankTerm {
                modality: Modality::Vector,
                column: "embedding".into(),
                query: RankQueryValue::Vector(q),
                weight: 1.0,
            }],
            k: 1,
        }),
        mode: Default::default(),
        options: QueryOptions {
            n_probe: Some(N_CENTROIDS),
            ..Default::default()
        },
    };
    let (rows, _) = execute(&table, &spec).unwrap();
    assert_eq!(rows.len(), 1);
    // key 1's stale near-zero version must not win; key 2 is the true top-1
    assert_eq!(rows[0].key, KeyValue::Int(2));
}

