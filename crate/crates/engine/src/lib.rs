//! Embedded real-time multimodal storage and query engine.
//!
//! Records carrying relational, vector, spatial, and text attributes are
//! ingested into an LSM tree whose immutable segments embed per-column
//! secondary indexes (btree, IVF vector, z-order spatial, inverted text).
//! On top of the storage layer sit a cost-based hybrid query planner with
//! an NRA-style top-k executor, and a continuous-query engine backed by
//! incrementally maintained materialized views.

pub mod error;
pub mod index;
pub mod query;
pub mod schema;
pub mod spatial;
pub mod storage;
pub mod text;
pub mod value;
pub mod vector;
pub mod views;

pub use error::{Error, Result};
pub use query::{
    ExecutionReport, Predicate, QueryMode, QueryOptions, QuerySpec, RankSpec, RankTerm, ResultRow,
};
pub use schema::{ColumnDef, ColumnKind, IndexKind, IndexSpec, TableSchema};
pub use storage::{Database, DatabaseOptions, Snapshot, Table};
pub use value::{AttributeValue, GeometryValue, KeyValue, Record};
pub use views::ViewEngine;
