//! Plan enumeration and the cost model.
//!
//! cost = Σ_legs blocks_index(leg)·C_BLK
//!      + |candidates_est|·(C_KEY + |residuals|·C_RES)
//! with |candidates_est| = N·Π selectivity of the served predicates
//! (independence assumption). A full scan costs
//! N·(C_KEY + |filters|·C_RES) + data_blocks·C_BLK.

use crate::query::spec::{Modality, QuerySpec};
use crate::query::stats::TableStatsView;
use crate::schema::{IndexKind, TableSchema};
use crate::storage::Snapshot;

pub const C_BLK: f64 = 1.0;
pub const C_KEY: f64 = 0.02;
pub const C_RES: f64 = 0.005;

/// Entries per btree/spatial index leaf block, for block-count estimates.
const ENTRIES_PER_INDEX_BLOCK: f64 = 96.0;
/// Consumed-entries heuristic for the NRA executor: min(N, this × k).
const NRA_CONSUMED_PER_K: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexLeg {
    /// Index into `spec.filters`.
    pub filter_idx: usize,
    pub column: String,
    pub kind: IndexKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanNode {
    FullScan {
        residuals: Vec<usize>,
    },
    IndexFilter {
        leg: IndexLeg,
        residuals: Vec<usize>,
    },
    IndexIntersect {
        legs: Vec<IndexLeg>,
        residuals: Vec<usize>,
    },
    /// Rank execution over sorted index iterators with an optional
    /// pre-filter plan producing the candidate mask.
    NraTopK {
        pre_filter: Option<Box<PlanNode>>,
    },
    /// Rank fallback: filtered scan, score everything, sort, take k.
    ScanSort,
}

impl PlanNode {
    pub fn describe(&self, spec: &QuerySpec) -> String {
        match self {
            PlanNode::FullScan { residuals } => format!("FullScan(residuals={})", residuals.len()),
            PlanNode::IndexFilter { leg, residuals } => format!(
                "IndexFilter({} via {}, residuals={})",
                spec.filters[leg.filter_idx].describe(),
                leg.kind.name(),
                residuals.len()
            ),
            PlanNode::IndexIntersect { legs, residuals } => {
                let names: Vec<String> = legs
                    .iter()
                    .map(|l| spec.filters[l.filter_idx].describe())
                    .collect();
                format!("IndexIntersect({}, residuals={})", names.join(" ∩ "), residuals.len())
            }
            PlanNode::NraTopK { pre_filter } => match pre_filter {
                Some(inner) => format!("NraTopK(pre_filter={})", inner.describe(spec)),
                None => "NraTopK".to_string(),
            },
            PlanNode::ScanSort => "ScanSort".to_string(),
        }
    }
}

pub struct CostedPlan {
    pub plan: PlanNode,
    pub estimated_cost: f64,
    pub estimated_rows: f64,
}

fn leg_blocks(leg: &IndexLeg, sel: f64, n_rows: f64, n_segments: f64) -> f64 {
    match leg.kind {
        IndexKind::Btree => {
            n_segments + (sel * n_rows / ENTRIES_PER_INDEX_BLOCK).ceil()
        }
        IndexKind::Spatial => n_segments + (sel * n_rows / ENTRIES_PER_INDEX_BLOCK).ceil(),
        IndexKind::Inverted => 2.0 * n_segments,
        // θ-filters probe every cell so the result stays exact
        IndexKind::Ivf { n_centroids } => n_segments * (1.0 + n_centroids as f64),
    }
}

pub struct PlanContext<'a> {
    pub schema: &'a TableSchema,
    pub stats: TableStatsView<'a>,
    pub n_segments: f64,
    pub data_blocks: f64,
    pub n_probe: usize,
}

impl<'a> PlanContext<'a> {
    pub fn new(schema: &'a TableSchema, snapshot: &'a Snapshot, n_probe: Option<usize>) -> Self {
        let stats = TableStatsView::new(
            snapshot
                .state
                .segments
                .iter()
                .filter_map(|s| snapshot.state.stats.get(&s.id))
                .map(|s| s.as_ref()),
        );
        let data_blocks = snapshot
            .state
            .segments
            .iter()
            .map(|s| s.data_blocks.len() as f64)
            .sum();
        PlanContext {
            schema,
            stats,
            n_segments: snapshot.state.segments.len() as f64,
            data_blocks,
            n_probe: n_probe.unwrap_or(0),
        }
    }
}

pub fn cost_plan(plan: &PlanNode, spec: &QuerySpec, ctx: &PlanContext<'_>) -> CostedPlan {
    let n = ctx.stats.total_rows() as f64;
    let (cost, rows) = match plan {
        PlanNode::FullScan { residuals } => {
            let cost = n * (C_KEY + residuals.len() as f64 * C_RES) + ctx.data_blocks * C_BLK;
            let sel: f64 = residuals
                .iter()
                .map(|&i| ctx.stats.estimate_selectivity(&spec.filters[i]))
                .product();
            (cost, n * sel)
        }
        PlanNode::IndexFilter { leg, residuals } => {
            let sel = ctx.stats.estimate_selectivity(&spec.filters[leg.filter_idx]);
            let candidates = n * sel;
            let blocks = leg_blocks(leg, sel, n, ctx.n_segments);
            let cost = blocks * C_BLK + candidates * (C_KEY + residuals.len() as f64 * C_RES);
            let out_sel: f64 = residuals
                .iter()
                .map(|&i| ctx.stats.estimate_selectivity(&spec.filters[i]))
                .product();
            (cost, candidates * out_sel)
        }
        PlanNode::IndexIntersect { legs, residuals } => {
            let mut blocks = 0.0;
            let mut sel_product = 1.0;
            for leg in legs {
                let sel = ctx.stats.estimate_selectivity(&spec.filters[leg.filter_idx]);
                blocks += leg_blocks(leg, sel, n, ctx.n_segments);
                sel_product *= sel;
            }
            let candidates = n * sel_product;
            let cost = blocks * C_BLK + candidates * (C_KEY + residuals.len() as f64 * C_RES);
            let out_sel: f64 = residuals
                .iter()
                .map(|&i| ctx.stats.estimate_selectivity(&spec.filters[i]))
                .product();
            (cost, candidates * out_sel)
        }
        PlanNode::NraTopK { pre_filter } => {
            let rank = spec.rank.as_ref().expect("rank plan without rank spec");
            let mut blocks = 0.0;
            for term in &rank.terms {
                blocks += match term.modality {
                    Modality::Vector => {
                        let n_probe = if ctx.n_probe > 0 {
                            ctx.n_probe as f64
                        } else {
                            match ctx.schema.index_for_column(&term.column).map(|s| s.kind) {
                                Some(IndexKind::Ivf { n_centroids }) => {
                                    crate::vector::default_n_probe(n_centroids) as f64
                                }
                                _ => 4.0,
                            }
                        };
                        ctx.n_segments * (1.0 + n_probe)
                    }
                    Modality::Spatial => ctx.n_segments * (1.0 + n / ENTRIES_PER_INDEX_BLOCK / ctx.n_segments.max(1.0)),
                    Modality::Text => 2.0 * ctx.n_segments,
                };
            }
            let consumed = (NRA_CONSUMED_PER_K * rank.k as f64).min(n.max(1.0));
            let mut cost = blocks * C_BLK + consumed * C_KEY + rank.k as f64 * C_KEY;
            if let Some(inner) = pre_filter {
                cost += cost_plan(inner, spec, ctx).estimated_cost;
            }
            (cost, rank.k as f64)
        }
        PlanNode::ScanSort => {
            let rank = spec.rank.as_ref().expect("rank plan without rank spec");
            let scan = n * (C_KEY + spec.filters.len() as f64 * C_RES) + ctx.data_blocks * C_BLK;
            // distance evaluation for every surviving row
            let sel: f64 = spec
                .filters
                .iter()
                .map(|p| ctx.stats.estimate_selectivity(p))
                .product();
            let cost = scan + n * sel * rank.terms.len() as f64 * C_RES;
            (cost, rank.k as f64)
        }
    };
    CostedPlan {
        plan: plan.clone(),
        estimated_cost: cost,
        estimated_rows: rows,
    }
}

/// Enumerate every viable plan: a full scan; one IndexFilter per servable
/// predicate; IndexIntersect over each subset of ≥ 2 servable predicates
/// (the 4 most selective cap enumeration at 2⁴); for rank queries, NraTopK
/// with the cheapest filter plan as pre-filter, plus the ScanSort fallback.
pub fn enumerate_plans(spec: &QuerySpec, ctx: &PlanContext<'_>) -> Vec<CostedPlan> {
    let all: Vec<usize> = (0..spec.filters.len()).collect();
    let mut servable: Vec<IndexLeg> = Vec::new();
    for (idx, pred) in spec.filters.iter().enumerate() {
        if let Some(kind) = spec.filter_servable(ctx.schema, idx) {
            servable.push(IndexLeg {
                filter_idx: idx,
                column: pred.column().to_string(),
                kind,
            });
        }
    }
    if servable.len() > 4 {
        servable.sort_by(|a, b| {
            let sa = ctx.stats.estimate_selectivity(&spec.filters[a.filter_idx]);
            let sb = ctx.stats.estimate_selectivity(&spec.filters[b.filter_idx]);
            sa.total_cmp(&sb)
        });
        servable.truncate(4);
        servable.sort_by_key(|l| l.filter_idx);
    }

    let mut filter_plans: Vec<PlanNode> = vec![PlanNode::FullScan { residuals: all.clone() }];
    for leg in &servable {
        let residuals: Vec<usize> = all.iter().copied().filter(|&i| i != leg.filter_idx).collect();
        filter_plans.push(PlanNode::IndexFilter {
            leg: leg.clone(),
            residuals,
        });
    }
    if servable.len() >= 2 {
        let n = servable.len();
        for mask in 1u32..(1 << n) {
            if mask.count_ones() < 2 {
                continue;
            }
            let legs: Vec<IndexLeg> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| servable[i].clone())
                .collect();
            let served: std::collections::HashSet<usize> =
                legs.iter().map(|l| l.filter_idx).collect();
            let residuals: Vec<usize> = all.iter().copied().filter(|i| !served.contains(i)).collect();
            filter_plans.push(PlanNode::IndexIntersect { legs, residuals });
        }
    }

    let mut out: Vec<CostedPlan> = Vec::new();
    if let Some(rank) = &spec.rank {
        // NRA needs a sorted index source per rank term
        let nra_possible = rank
            .terms
            .iter()
            .all(|t| ctx.schema.index_for_column(&t.column).is_some());
        if nra_possible {
            let pre_filter = if spec.filters.is_empty() {
                None
            } else {
                let best = filter_plans
                    .iter()
                    .map(|p| cost_plan(p, spec, ctx))
                    .min_by(|a, b| a.estimated_cost.total_cmp(&b.estimated_cost))
                    .expect("at least the full scan");
                Some(Box::new(best.plan))
            };
            out.push(cost_plan(&PlanNode::NraTopK { pre_filter }, spec, ctx));
        }
        out.push(cost_plan(&PlanNode::ScanSort, spec, ctx));
    } else {
        for plan in &filter_plans {
            out.push(cost_plan(plan, spec, ctx));
        }
    }
    out
}

/// Minimum-cost plan; ties resolve to the earliest enumerated.
pub fn choose_plan(plans: &[CostedPlan]) -> usize {
    let mut best = 0usize;
    for (i, plan) in plans.iter().enumerate() {
        if plan.estimated_cost < plans[best].estimated_cost {
            best = i;
        }
    }
    best
}

/// Parse a forced-plan directive: `full_scan`, `index:<column>`,
/// `intersect:<col1+col2[+...]>`, `nra`, or `scan_sort`.
pub fn find_forced<'a>(plans: &'a [CostedPlan], spec: &QuerySpec, directive: &str) -> Option<&'a CostedPlan> {
    plans.iter().find(|p| match (&p.plan, directive) {
        (PlanNode::FullScan { .. }, "full_scan") => true,
        (PlanNode::ScanSort, "scan_sort") => true,
        (PlanNode::NraTopK { .. }, "nra") => true,
        (PlanNode::IndexFilter { leg, .. }, d) => {
            d.strip_prefix("index:").map(|c| c == leg.column).unwrap_or(false)
        }
        (PlanNode::IndexIntersect { legs, .. }, d) => d
            .strip_prefix("intersect:")
            .map(|cols| {
                let mut want: Vec<&str> = cols.split('+').collect();
                want.sort_unstable();
                let mut have: Vec<&str> = legs.iter().map(|l| l.column.as_str()).collect();
                have.sort_unstable();
                want == have
            })
            .unwrap_or(false),
        _ => {
            let _ = spec;
            false
        }
    })
}
