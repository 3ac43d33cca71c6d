//! Workload metrics: latency aggregates per query kind, ingestion
//! throughput, block reads, plan histogram, and view hit rate. Rendered as
//! a human table and as machine-readable `name value unit` lines.

use std::collections::BTreeMap;

#[derive(Debug, Clone, Default)]
pub struct LatencyStats {
    pub count: u64,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: &mut Vec<f64>) -> LatencyStats {
        if samples.is_empty() {
            return LatencyStats::default();
        }
        samples.sort_by(|a, b| a.total_cmp(b));
        let count = samples.len() as u64;
        let mean = samples.iter().sum::<f64>() / count as f64;
        let pct = |p: f64| samples[((p * (count as f64 - 1.0)).round() as usize).min(samples.len() - 1)];
        LatencyStats {
            count,
            mean_ms: mean,
            p50_ms: pct(0.50),
            p95_ms: pct(0.95),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MetricsReport {
    pub search: LatencyStats,
    pub nn: LatencyStats,
    pub writes: u64,
    pub reads: u64,
    pub errors: u64,
    pub ingest_rows_per_sec: f64,
    pub physical_block_reads: u64,
    pub plan_histogram: BTreeMap<String, u64>,
    pub view_hits: u64,
    pub wall_seconds: f64,
}

impl MetricsReport {
    pub fn view_hit_rate(&self) -> f64 {
        if self.reads == 0 {
            0.0
        } else {
            self.view_hits as f64 / self.reads as f64
        }
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<16} {:>8} {:>10} {:>10} {:>10}\n",
            "kind", "count", "mean_ms", "p50_ms", "p95_ms"
        ));
        for (name, stats) in [("hybrid_search", &self.search), ("hybrid_nn", &self.nn)] {
            out.push_str(&format!(
                "{:<16} {:>8} {:>10.3} {:>10.3} {:>10.3}\n",
                name, stats.count, stats.mean_ms, stats.p50_ms, stats.p95_ms
            ));
        }
        out.push_str(&format!(
            "writes={} reads={} errors={} ingest={:.0} rows/s block_reads={} view_hit_rate={:.3} wall={:.2}s\n",
            self.writes,
            self.reads,
            self.errors,
            self.ingest_rows_per_sec,
            self.physical_block_reads,
            self.view_hit_rate(),
            self.wall_seconds
        ));
        out.push_str("plans:\n");
        for (plan, count) in &self.plan_histogram {
            out.push_str(&format!("  {plan:<24} {count}\n"));
        }
        out
    }

    /// One metric per line: `name value unit`.
    pub fn render_machine(&self) -> String {
        let mut lines = Vec::new();
        lines.push(format!("search_count {} ops", self.search.count));
        lines.push(format!("search_mean {:.4} ms", self.search.mean_ms));
        lines.push(format!("search_p50 {:.4} ms", self.search.p50_ms));
        lines.push(format!("search_p95 {:.4} ms", self.search.p95_ms));
        lines.push(format!("nn_count {} ops", self.nn.count));
        lines.push(format!("nn_mean {:.4} ms", self.nn.mean_ms));
        lines.push(format!("nn_p50 {:.4} ms", self.nn.p50_ms));
        lines.push(format!("nn_p95 {:.4} ms", self.nn.p95_ms));
        lines.push(format!("writes {} ops", self.writes));
        lines.push(format!("reads {} ops", self.reads));
        lines.push(format!("errors {} ops", self.errors));
        lines.push(format!("ingest_throughput {:.2} rows/s", self.ingest_rows_per_sec));
        lines.push(format!("physical_block_reads {} blocks", self.physical_block_reads));
        lines.push(format!("view_hit_rate {:.4} fraction", self.view_hit_rate()));
        lines.push(format!("wall_time {:.3} s", self.wall_seconds));
        for (plan, count) in &self.plan_histogram {
            lines.push(format!("plan_{plan} {count} ops"));
        }
        lines.join("\n") + "\n"
    }
}

/// One row of the forced-scan vs optimizer comparison.
#[derive(Debug, Clone)]
pub struct PlanComparison {
    pub template: u8,
    pub kind: &'static str,
    pub scan_ms: f64,
    pub chosen_ms: f64,
    pub chosen_plan: String,
}

impl PlanComparison {
    pub fn speedup(&self) -> f64 {
        if self.chosen_ms <= 0.0 {
            0.0
        } else {
            self.scan_ms / self.chosen_ms
        }
    }
}

pub fn render_comparison(rows: &[PlanComparison]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<9} {:<14} {:>12} {:>12} {:>9}  {}\n",
        "template", "kind", "scan_ms", "chosen_ms", "speedup", "chosen_plan"
    ));
    for row in rows {
        out.push_str(&format!(
            "{:<9} {:<14} {:>12.3} {:>12.3} {:>9.2}  {}\n",
            row.template,
            row.kind,
            row.scan_ms,
            row.chosen_ms,
            row.speedup(),
            row.chosen_plan
        ));
    }
    out
}
