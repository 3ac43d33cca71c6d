//! Hybrid query layer: declarative specs, statistics, cost-based planning
//! over single/multiple indexes and scans, and NRA top-k execution.

pub mod exec;
pub mod nra;
pub mod plan;
pub mod spec;
pub mod stats;

pub use exec::{
    cost_single, eval_predicate, execute, execute_at, plans_for, render_explain, run_plan,
    ExecutionReport, ResultRow,
};
pub use nra::{nra_topk, NraItem, NraOutcome, NraReport};
pub use plan::{choose_plan, enumerate_plans, CostedPlan, IndexLeg, PlanContext, PlanNode};
pub use spec::{
    Modality, NraMode, Predicate, QueryMode, QueryOptions, QuerySpec, RankQueryValue, RankSpec,
    RankTerm, ScalarBound,
};
