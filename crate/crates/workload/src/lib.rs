//! Desk-scale benchmark for the multimodal engine: synthetic tweet/POI/city
//! data with planted structure, an 11-template hybrid query family, and
//! interleaved read/write dynamic workloads with metrics reporting.

pub mod config;
pub mod datagen;
pub mod report;
pub mod runner;
pub mod templates;

pub use config::{Scenario, TemplateMix, WorkloadConfig};
pub use datagen::{generate_dataset, insert_tweet, Dataset, GeneratedTables, TweetRow};
pub use report::{render_comparison, LatencyStats, MetricsReport, PlanComparison};
pub use runner::{build_schedule, compare_plans_report, ingest_throughput, run_workload, Op};
pub use templates::{instantiate, template_kind, templates_for, TemplateKind, TEMPLATE_IDS};
