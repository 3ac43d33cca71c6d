//! Workload configuration: dataset sizes, read/write mix, template mix, and
//! determinism controls. Mirrors the JSON config file consumed by the CLI.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// 1:9 read-to-write ratio.
    WriteHeavy,
    /// 9:1 read-to-write ratio.
    ReadHeavy,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateMix {
    SearchOnly,
    NnOnly,
    Mixed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadConfig {
    #[serde(default = "default_tweets")]
    pub tweets: usize,
    #[serde(default = "default_pois")]
    pub pois: usize,
    #[serde(default = "default_cities")]
    pub cities: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_clusters")]
    pub embedding_clusters: usize,
    pub scenario: Scenario,
    /// Used when scenario = custom; reads : writes.
    #[serde(default = "default_reads")]
    pub reads: u32,
    #[serde(default = "default_writes")]
    pub writes: u32,
    #[serde(default = "default_mix")]
    pub template_mix: TemplateMix,
    /// Fraction of the tweet table loaded before the workload starts.
    #[serde(default = "default_preload")]
    pub preload_fraction: f64,
    pub seed: u64,
    #[serde(default = "default_ops")]
    pub operations: u64,
    #[serde(default = "default_query_workers")]
    pub query_workers: usize,
}

fn default_tweets() -> usize {
    500_000
}
fn default_pois() -> usize {
    50_000
}
fn default_cities() -> usize {
    2_000
}
fn default_dim() -> usize {
    128
}
fn default_clusters() -> usize {
    16
}
fn default_reads() -> u32 {
    1
}
fn default_writes() -> u32 {
    1
}
fn default_mix() -> TemplateMix {
    TemplateMix::Mixed
}
fn default_preload() -> f64 {
    0.25
}
fn default_ops() -> u64 {
    10_000
}
fn default_query_workers() -> usize {
    4
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            tweets: default_tweets(),
            pois: default_pois(),
            cities: default_cities(),
            dim: default_dim(),
            embedding_clusters: default_clusters(),
            scenario: Scenario::ReadHeavy,
            reads: default_reads(),
            writes: default_writes(),
            template_mix: default_mix(),
            preload_fraction: default_preload(),
            seed: 42,
            operations: default_ops(),
            query_workers: default_query_workers(),
        }
    }
}

impl WorkloadConfig {
    pub fn ratio(&self) -> (u32, u32) {
        match self.scenario {
            Scenario::WriteHeavy => (1, 9),
            Scenario::ReadHeavy => (9, 1),
            Scenario::Custom => (self.reads.max(1), self.writes.max(1)),
        }
    }

    /// Small desk-scale profile for tests.
    pub fn small(seed: u64) -> Self {
        WorkloadConfig {
            tweets: 4_000,
            pois: 500,
            cities: 50,
            dim: 16,
            embedding_clusters: 8,
            operations: 400,
            seed,
            ..Default::default()
        }
    }
}
