//! Dynamic workload execution: a deterministic read/write interleaving over
//! the template family, dispatched to one ingest worker and a pool of query
//! workers, with per-operation latency accounting.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Instant;

use arcdb::query::QuerySpec;
use arcdb::storage::Database;
use arcdb::views::ViewEngine;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::config::WorkloadConfig;
use crate::datagen::{insert_tweet, Dataset, GeneratedTables, TweetRow};
use crate::report::{LatencyStats, MetricsReport, PlanComparison};
use crate::templates::{instantiate, template_kind, templates_for, TemplateKind};

#[derive(Debug, Clone)]
pub enum Op {
    Write(TweetRow),
    Read { template: u8, spec: QuerySpec },
}

/// Deterministic operation schedule: reads and writes interleave by a
/// Bresenham walk over the configured ratio; templates rotate round-robin;
/// parameters sample from the seed.
pub fn build_schedule(dataset: &Dataset, config: &WorkloadConfig) -> Vec<Op> {
    let (reads, writes) = config.ratio();
    let cycle = (reads + writes) as u64;
    let templates = templates_for(config.template_mix);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9);
    let mut schedule = Vec::with_capacity(config.operations as usize);
    let mut pending = dataset.pending_tweets.iter().cycle();
    let mut synthetic_id = dataset.preloaded as i64 + dataset.pending_tweets.len() as i64;
    let mut template_cursor = 0usize;
    let mut writes_emitted = 0u64;
    for i in 0..config.operations {
        let pos = i % cycle;
        let want_writes_so_far = ((pos + 1) * writes as u64) / cycle;
        let have_writes_so_far = (pos * writes as u64) / cycle;
        if want_writes_so_far > have_writes_so_far {
            let mut row = match pending.next() {
                Some(row) => row.clone(),
                None => break,
            };
            if writes_emitted >= dataset.pending_tweets.len() as u64 {
                // wrapped: re-issue content under a fresh id
                row.id = synthetic_id;
                row.time = synthetic_id;
                synthetic_id += 1;
            }
            writes_emitted += 1;
            schedule.push(Op::Write(row));
        } else {
            let template = templates[template_cursor % templates.len()];
            template_cursor += 1;
            schedule.push(Op::Read {
                template,
                spec: instantiate(dataset, template, &mut rng),
            });
        }
    }
    schedule
}

struct ReadOutcome {
    template: u8,
    latency_ms: f64,
    plan: String,
    used_view: bool,
    error: bool,
}

/// Execute the schedule. Writes run on the caller thread (the single
/// logical writer); reads fan out to `query_workers` threads. When a view
/// engine is supplied, reads go through dynamic rewriting.
pub fn run_workload(
    db: &Arc<Database>,
    tables: &GeneratedTables,
    dataset: &Dataset,
    config: &WorkloadConfig,
    engine: Option<&Arc<ViewEngine>>,
) -> arcdb::Result<MetricsReport> {
    let schedule = build_schedule(dataset, config);
    let reads_total = schedule.iter().filter(|op| matches!(op, Op::Read { .. })).count();
    let started = Instant::now();
    let reads_before = db.metrics().physical_reads();

    let (read_tx, read_rx) = mpsc::channel::<(u8, QuerySpec)>();
    let read_rx = Arc::new(std::sync::Mutex::new(read_rx));
    let (out_tx, out_rx) = mpsc::channel::<ReadOutcome>();

    let mut workers = Vec::new();
    for _ in 0..config.query_workers.max(1) {
        let rx = read_rx.clone();
        let tx = out_tx.clone();
        let tweets = tables.tweets.clone();
        let engine = engine.cloned();
        workers.push(std::thread::spawn(move || {
            loop {
                let next = rx.lock().unwrap().recv();
                let Ok((template, spec)) = next else { break };
                let begin = Instant::now();
                let result = match &engine {
                    Some(engine) => engine.execute_snapshot(&spec),
                    None => arcdb::query::execute(&tweets, &spec),
                };
                let latency_ms = begin.elapsed().as_secs_f64() * 1000.0;
                let outcome = match result {
                    Ok((_, report)) => ReadOutcome {
                        template,
                        latency_ms,
                        plan: plan_label(&report.plan),
                        used_view: report.used_view.is_some(),
                        error: false,
                    },
                    Err(_) => ReadOutcome {
                        template,
                        latency_ms,
                        plan: "error".into(),
                        used_view: false,
                        error: true,
                    },
                };
                let _ = tx.send(outcome);
            }
        }));
    }
    drop(out_tx);

    let mut writes = 0u64;
    let mut write_errors = 0u64;
    let mut ingest_busy = 0.0f64;
    for op in schedule {
        match op {
            Op::Write(row) => {
                let begin = Instant::now();
                match insert_tweet(&tables.tweets, &row) {
                    Ok(_) => writes += 1,
                    Err(_) => write_errors += 1,
                }
                ingest_busy += begin.elapsed().as_secs_f64();
            }
            Op::Read { template, spec } => {
                let _ = read_tx.send((template, spec));
            }
        }
    }
    drop(read_tx);
    for worker in workers {
        let _ = worker.join();
    }

    let mut search_samples = Vec::new();
    let mut nn_samples = Vec::new();
    let mut plan_histogram: BTreeMap<String, u64> = BTreeMap::new();
    let mut view_hits = 0u64;
    let mut errors = write_errors;
    let mut reads = 0u64;
    while let Ok(outcome) = out_rx.recv() {
        reads += 1;
        if outcome.error {
            errors += 1;
            continue;
        }
        match template_kind(outcome.template) {
            TemplateKind::HybridSearch => search_samples.push(outcome.latency_ms),
            TemplateKind::HybridNn => nn_samples.push(outcome.latency_ms),
        }
        *plan_histogram.entry(outcome.plan).or_insert(0) += 1;
        if outcome.used_view {
            view_hits += 1;
        }
    }
    debug_assert_eq!(reads as usize, reads_total);

    Ok(MetricsReport {
        search: LatencyStats::from_samples(&mut search_samples),
        nn: LatencyStats::from_samples(&mut nn_samples),
        writes,
        reads,
        errors,
        ingest_rows_per_sec: if ingest_busy > 0.0 { writes as f64 / ingest_busy } else { 0.0 },
        physical_block_reads: db.metrics().physical_reads() - reads_before,
        plan_histogram,
        view_hits,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

fn plan_label(plan: &str) -> String {
    plan.split(['(', ' ']).next().unwrap_or("unknown").to_string()
}

/// Per-template mean latency under a forced scan plan vs the optimizer's
/// choice.
pub fn compare_plans_report(
    tables: &GeneratedTables,
    dataset: &Dataset,
    config: &WorkloadConfig,
    instances_per_template: usize,
) -> arcdb::Result<Vec<PlanComparison>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x51ed_270c);
    let mut rows = Vec::new();
    for id in templates_for(config.template_mix) {
        let mut scan_total = 0.0;
        let mut chosen_total = 0.0;
        let mut chosen_plan = String::new();
        for _ in 0..instances_per_template {
            let spec = instantiate(dataset, id, &mut rng);
            let forced = QuerySpec {
                options: arcdb::query::QueryOptions {
                    force_plan: Some(
                        if spec.rank.is_some() { "scan_sort" } else { "full_scan" }.into(),
                    ),
                    ..spec.options.clone()
                },
                ..spec.clone()
            };
            let begin = Instant::now();
            arcdb::query::execute(&tables.tweets, &forced)?;
            scan_total += begin.elapsed().as_secs_f64() * 1000.0;

            let begin = Instant::now();
            let (_, report) = arcdb::query::execute(&tables.tweets, &spec)?;
            chosen_total += begin.elapsed().as_secs_f64() * 1000.0;
            chosen_plan = plan_label(&report.plan);
        }
        rows.push(PlanComparison {
            template: id,
            kind: match template_kind(id) {
                TemplateKind::HybridSearch => "hybrid_search",
                TemplateKind::HybridNn => "hybrid_nn",
            },
            scan_ms: scan_total / instances_per_template as f64,
            chosen_ms: chosen_total / instances_per_template as f64,
            chosen_plan,
        });
    }
    Ok(rows)
}

/// Ingest every pending tweet as fast as possible; returns rows/sec and the
/// maximum single-put latency. Used for the indexed-vs-plain ingestion
/// comparison.
pub fn ingest_throughput(
    tables: &GeneratedTables,
    rows: &[TweetRow],
) -> arcdb::Result<(f64, f64)> {
    let max_latency = AtomicU64::new(0);
    let started = Instant::now();
    for row in rows {
        let begin = Instant::now();
        insert_tweet(&tables.tweets, row)?;
        let ns = begin.elapsed().as_nanos() as u64;
        max_latency.fetch_max(ns, Ordering::Relaxed);
    }
    let secs = started.elapsed().as_secs_f64();
    Ok((
        rows.len() as f64 / secs.max(1e-9),
        max_latency.load(Ordering::Relaxed) as f64 / 1e6,
    ))
}
