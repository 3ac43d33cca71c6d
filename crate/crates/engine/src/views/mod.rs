//! Continuous-query engine: SYNC/ASYNC query registry, clustering-based
//! materialized view selection under a storage budget, delta-driven
//! incremental maintenance through a coverage-region index, and
//! static/dynamic query rewriting.

pub mod catalog;
pub mod cluster;
pub mod engine;
pub mod select;
pub mod view;

pub use catalog::ViewCatalog;
pub use cluster::{cluster_queries, QueryCluster};
pub use engine::{ContinuousQuery, ExecutionLogLine, QueryId, ViewEngine, ViewEngineOptions};
pub use select::{select_views, Candidate};
pub use view::{CoverageRegion, MaterializedView, ViewFlavor, ViewId};
