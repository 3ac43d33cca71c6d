//! Command-line front door: create tables, ingest newline-delimited
//! records, run hybrid queries (snapshot/sync/async), manage continuous
//! queries and views, and drive benchmarks.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error (message on
//! stderr). Query output is line-delimited: tab-separated projected columns
//! followed by distances.

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use arcdb::query::{QueryMode, QuerySpec};
use arcdb::schema::TableSchema;
use arcdb::storage::{Database, DatabaseOptions};
use arcdb::value::{AttributeValue, KeyValue, Record};
use arcdb::views::{ViewEngine, ViewEngineOptions};
use arcdb_workload::{
    compare_plans_report, generate_dataset, render_comparison, run_workload, WorkloadConfig,
};

#[derive(Parser)]
#[command(name = "arcdb", version, about = "embedded multimodal storage and query engine")]
struct Cli {
    /// Database directory.
    #[arg(long, global = true, default_value = "./arcdb-data")]
    data_dir: PathBuf,
    /// Block cache capacity in MiB.
    #[arg(long, global = true, default_value_t = 512)]
    cache_mb: usize,
    /// Seed for deterministic benchmark runs.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a table from a JSON schema file.
    Init { schema_file: PathBuf },
    /// Ingest newline-delimited JSON records into a table.
    Load {
        table: String,
        data_file: PathBuf,
    },
    /// Run one query from a DSL file or an inline JSON document.
    Query {
        /// Path to a query document, or the document itself.
        query: String,
        /// Print the plan tree with estimated vs actual counters.
        #[arg(long)]
        explain: bool,
        /// Force a specific plan: full_scan | index:<col> |
        /// intersect:<c1+c2> | nra | scan_sort.
        #[arg(long)]
        force_plan: Option<String>,
        /// IVF probe width.
        #[arg(long)]
        n_probe: Option<usize>,
    },
    /// Register a continuous (sync/async) query.
    Register {
        query: String,
        /// Keep running: fire scheduled executions and print digests until
        /// interrupted.
        #[arg(long)]
        follow: bool,
        /// Materialized view storage budget in MiB.
        #[arg(long, default_value_t = 150)]
        view_budget_mb: u64,
    },
    /// Manage materialized views.
    Views {
        #[command(subcommand)]
        action: ViewAction,
    },
    /// Run the benchmark from a JSON workload config.
    Bench { config: PathBuf },
    /// Per-template latency: forced scan vs optimizer-chosen plan.
    BenchCompare { config: PathBuf },
    /// Table and cache statistics.
    Stats,
}

#[derive(Subcommand)]
enum ViewAction {
    /// List live views: id, flavor, bytes, watermark, hits.
    List,
    /// Drop a registered continuous query.
    DropQuery { id: u64 },
    /// Re-run clustering, knapsack selection, and view builds.
    ForceReselect,
}

fn open_db(cli: &Cli) -> Result<Arc<Database>> {
    let options = DatabaseOptions {
        cache_bytes: cli.cache_mb << 20,
        ..Default::default()
    };
    Ok(Database::open(&cli.data_dir, options)?)
}

fn read_query_doc(arg: &str) -> Result<String> {
    if arg.trim_start().starts_with('{') {
        Ok(arg.to_string())
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("reading query file {arg}"))
    }
}

fn render_value(value: &AttributeValue) -> String {
    match value {
        AttributeValue::Null => "null".into(),
        AttributeValue::Int(v) => v.to_string(),
        AttributeValue::Float(v) => format!("{v}"),
        AttributeValue::Str(s) => s.clone(),
        AttributeValue::Vector(v) => {
            let parts: Vec<String> = v.iter().take(4).map(|c| format!("{c:.4}")).collect();
            if v.len() > 4 {
                format!("[{},… ×{}]", parts.join(","), v.len())
            } else {
                format!("[{}]", parts.join(","))
            }
        }
        AttributeValue::Geometry(g) => format!("{g:?}"),
        AttributeValue::Blob(b) => format!("<blob {} bytes>", b.len()),
    }
}

fn print_rows(rows: &[arcdb::query::ResultRow]) {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for row in rows {
        let mut cells: Vec<String> = row.columns.iter().map(|(_, v)| render_value(v)).collect();
        for (label, d) in &row.distances {
            cells.push(format!("{label}_d={d:.6}"));
        }
        if let Some(score) = row.score {
            cells.push(format!("score={score:.6}"));
        }
        let _ = writeln!(out, "{}", cells.join("\t"));
    }
}

fn json_to_record(schema: &TableSchema, doc: &serde_json::Value) -> Result<Record> {
    let obj = doc.as_object().context("record must be a JSON object")?;
    let pk = obj
        .get(&schema.primary_key)
        .with_context(|| format!("record missing primary key `{}`", schema.primary_key))?;
    let key = match pk {
        serde_json::Value::Number(n) => {
            KeyValue::Int(n.as_i64().context("primary key must be an integer")?)
        }
        serde_json::Value::String(s) => KeyValue::Str(s.clone()),
        _ => bail!("primary key must be an integer or string"),
    };
    let mut record = Record::new(key);
    for (name, value) in obj {
        if name == &schema.primary_key {
            continue;
        }
        let attr: AttributeValue = serde_json::from_value(value.clone())
            .with_context(|| format!("column `{name}`: unsupported value"))?;
        record.attrs.insert(name.clone(), attr);
    }
    Ok(record)
}

fn run(cli: Cli) -> Result<i32> {
    match &cli.command {
        Command::Init { schema_file } => {
            let schema: TableSchema =
                serde_json::from_slice(&std::fs::read(schema_file).context("reading schema file")?)
                    .context("parsing schema")?;
            let db = open_db(&cli)?;
            let table = db.create_table(schema)?;
            println!("created table {}", table.name());
        }
        Command::Load { table, data_file } => {
            let db = open_db(&cli)?;
            let table = db.table(table)?;
            let file = std::fs::File::open(data_file).context("opening data file")?;
            let mut count = 0u64;
            for line in std::io::BufReader::new(file).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let doc: serde_json::Value = serde_json::from_str(&line)
                    .with_context(|| format!("line {}", count + 1))?;
                let record = json_to_record(&table.schema, &doc)?;
                table.put(&record)?;
                count += 1;
            }
            table.flush_now()?;
            println!("loaded {count} rows into {}", table.name());
        }
        Command::Query { query, explain, force_plan, n_probe } => {
            let db = open_db(&cli)?;
            let mut spec = QuerySpec::parse(&read_query_doc(query)?)?;
            if let Some(plan) = force_plan {
                spec.options.force_plan = Some(plan.clone());
            }
            if let Some(n) = n_probe {
                spec.options.n_probe = Some(*n);
            }
            let table = db.table(&spec.table)?;
            let (rows, report) = arcdb::query::execute(&table, &spec)?;
            if *explain {
                print!("{}", arcdb::query::render_explain(&report));
            }
            print_rows(&rows);
        }
        Command::Register { query, follow, view_budget_mb } => {
            let db = open_db(&cli)?;
            let spec = QuerySpec::parse(&read_query_doc(query)?)?;
            if spec.mode == QueryMode::Snapshot {
                bail!("register needs a sync or async mode query");
            }
            let engine = ViewEngine::new(
                db.clone(),
                ViewEngineOptions {
                    budget_bytes: view_budget_mb << 20,
                    ..Default::default()
                },
            );
            let id = engine.register(spec)?;
            engine.reselect()?;
            println!("registered query {id}");
            if *follow {
                let stop = Arc::new(std::sync::atomic::AtomicBool::new(false));
                {
                    let stop = stop.clone();
                    ctrlc::set_handler(move || stop.store(true, std::sync::atomic::Ordering::SeqCst))
                        .context("installing signal handler")?;
                }
                let started = std::time::Instant::now();
                while !stop.load(std::sync::atomic::Ordering::SeqCst) {
                    let fired = engine.scheduler_tick(started.elapsed().as_secs_f64())?;
                    for line in engine.take_log() {
                        println!("{}", line.render());
                    }
                    let _ = fired;
                    std::thread::sleep(std::time::Duration::from_millis(100));
                }
                // clean shutdown: make the memtable durable
                db.flush_all()?;
                eprintln!("shut down cleanly");
            }
        }
        Command::Views { action } => {
            let db = open_db(&cli)?;
            let engine = ViewEngine::new(db, ViewEngineOptions::default());
            match action {
                ViewAction::List => {
                    println!("{:<6} {:<14} {:>12} {:>12} {:>8}", "id", "flavor", "bytes", "watermark", "hits");
                    for (id, flavor, bytes, watermark, hits) in engine.views_summary() {
                        println!("{id:<6} {flavor:<14} {bytes:>12} {watermark:>12} {hits:>8}");
                    }
                }
                ViewAction::DropQuery { id } => {
                    engine.drop_query(*id)?;
                    println!("dropped query {id}");
                }
                ViewAction::ForceReselect => {
                    engine.reselect()?;
                    println!("reselected {} views", engine.views_summary().len());
                }
            }
        }
        Command::Bench { config } => {
            let mut workload: WorkloadConfig =
                serde_json::from_slice(&std::fs::read(config).context("reading workload config")?)?;
            workload.seed = cli.seed;
            let db = open_db(&cli)?;
            let (tables, dataset) = generate_dataset(&db, &workload)?;
            let report = run_workload(&db, &tables, &dataset, &workload, None)?;
            print!("{}", report.render_table());
            print!("{}", report.render_machine());
        }
        Command::BenchCompare { config } => {
            let mut workload: WorkloadConfig =
                serde_json::from_slice(&std::fs::read(config).context("reading workload config")?)?;
            workload.seed = cli.seed;
            let db = open_db(&cli)?;
            let (tables, dataset) = generate_dataset(&db, &workload)?;
            let rows = compare_plans_report(&tables, &dataset, &workload, 3)?;
            print!("{}", render_comparison(&rows));
        }
        Command::Stats => {
            let db = open_db(&cli)?;
            for name in db.table_names() {
                let table = db.table(&name)?;
                let snap = table.snapshot();
                let rows: u64 = snap.state.segments.iter().map(|s| s.row_count).sum();
                println!(
                    "table {name}: segments={} segment_rows={rows} last_seqno={}",
                    snap.state.segments.len(),
                    table.last_seqno()
                );
            }
            let metrics = db.metrics();
            println!(
                "cache: physical_reads={} hits={}",
                metrics.physical_reads(),
                metrics.cache_hits()
            );
        }
    }
    Ok(0)
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap renders its own message; usage problems exit 1
            let _ = err.print();
            std::process::exit(if err.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    }
}
