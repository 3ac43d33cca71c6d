//! The continuous-query engine: registry, view lifecycle, delta-driven
//! incremental maintenance, and static/dynamic rewriting.
//!
//! Writes reach the engine through table observers as raw delta rows; a
//! maintenance pass (triggered by scheduler ticks, refresh-on-read, or
//! explicitly in tests) applies them to every covered view through the
//! coverage-region catalog, advances watermarks, and queues async
//! re-executions. SYNC queries refresh pending deltas before answering, so
//! their rewritten answers are exact at their snapshot.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::error::{Error, Result};
use crate::query::exec::{eval_predicate, execute_at, ExecutionReport, ResultRow};
use crate::query::spec::{
    Modality, Predicate, QueryMode, QuerySpec, RankQueryValue, RankSpec, RankTerm,
};
use crate::query::{plans_for, PlanContext};
use crate::storage::{Database, Snapshot, Table};
use crate::value::{AttributeValue, GeometryValue, Row};
use crate::vector::l2;
use crate::views::catalog::ViewCatalog;
use crate::views::cluster::{cluster_queries, QueryCluster, SpatialShape, VectorShape};
use crate::views::select::{select_views, Candidate};
use crate::views::view::{MaterializedView, ViewFlavor, ViewId, ViewRow};

pub type QueryId = u64;

const EWMA_ALPHA: f64 = 0.2;
/// Default async frequency estimate before any trigger is observed (1/min).
const DEFAULT_ASYNC_RATE: f64 = 1.0 / 60.0;
/// Pool over-materialization factor: xk = factor × largest linked k.
const DEFAULT_XK_FACTOR: usize = 4;

#[derive(Debug, Clone)]
pub struct ContinuousQuery {
    pub id: QueryId,
    pub spec: QuerySpec,
    pub linked_views: Vec<ViewId>,
    pub last_digest: u64,
    pub exec_count: u64,
    pub mean_latency_ms: f64,
    pub trigger_rate_ewma: f64,
    next_due: Option<f64>,
    last_trigger_at: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExecutionLogLine {
    pub query_id: QueryId,
    pub mode: String,
    pub used_views: Vec<ViewId>,
    pub latency_ms: f64,
    pub exact: bool,
    pub rows: usize,
    pub digest: u64,
}

impl ExecutionLogLine {
    pub fn render(&self) -> String {
        let views: Vec<String> = self.used_views.iter().map(|v| v.to_string()).collect();
        format!(
            "query={} mode={} used_views=[{}] latency_ms={:.3} result={} rows={} digest={:016x}",
            self.query_id,
            self.mode,
            views.join(","),
            self.latency_ms,
            if self.exact { "exact" } else { "approximate" },
            self.rows,
            self.digest
        )
    }
}

#[derive(Debug, Clone)]
pub struct ViewEngineOptions {
    pub budget_bytes: u64,
    /// Re-run view selection automatically after this many registrations.
    pub reselect_every: u64,
    pub xk_factor: usize,
}

impl Default for ViewEngineOptions {
    fn default() -> Self {
        ViewEngineOptions {
            budget_bytes: 150 << 20,
            reselect_every: 512,
            xk_factor: DEFAULT_XK_FACTOR,
        }
    }
}

struct Inner {
    queries: BTreeMap<QueryId, ContinuousQuery>,
    catalog: ViewCatalog,
    next_query_id: QueryId,
    next_view_id: ViewId,
    async_queue: BTreeSet<QueryId>,
    pending: Vec<(String, Row)>,
    registrations_since_select: u64,
    log: Vec<ExecutionLogLine>,
    now: f64,
}

pub struct ViewEngine {
    db: Arc<Database>,
    pub options: ViewEngineOptions,
    inner: Mutex<Inner>,
}

fn digest_rows(rows: &[ResultRow]) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for row in rows {
        row.key.hash(&mut h);
        rows.len().hash(&mut h);
    }
    h.finish()
}

/// The spatial filter a view can absorb, if any.
fn spatial_shape_of(spec: &QuerySpec) -> Option<(usize, &str, [f64; 4])> {
    if spec.rank.is_some() {
        return None;
    }
    spec.filters.iter().enumerate().find_map(|(i, p)| match p {
        Predicate::SpatialContains { column, region } => Some((i, column.as_str(), region.bounding_rect())),
        _ => None,
    })
}

/// The single-vector rank shape a view can absorb, if any.
fn vector_shape_of(spec: &QuerySpec) -> Option<(&str, &[f32], usize)> {
    let rank = spec.rank.as_ref()?;
    if rank.terms.len() != 1 {
        return None;
    }
    let term = &rank.terms[0];
    match (&term.query, term.modality) {
        (RankQueryValue::Vector(q), Modality::Vector) => Some((term.column.as_str(), q, rank.k)),
        _ => None,
    }
}

fn filters_imply(base: &[Predicate], query_filters: &[Predicate]) -> bool {
    base.iter().all(|b| query_filters.contains(b))
}

impl ViewEngine {
    pub fn new(db: Arc<Database>, options: ViewEngineOptions) -> Arc<ViewEngine> {
        let engine = Arc::new(ViewEngine {
            db,
            options,
            inner: Mutex::new(Inner {
                queries: BTreeMap::new(),
                catalog: ViewCatalog::new(),
                next_query_id: 1,
                next_view_id: 1,
                async_queue: BTreeSet::new(),
                pending: Vec::new(),
                registrations_since_select: 0,
                log: Vec::new(),
                now: 0.0,
            }),
        });
        for name in engine.db.table_names() {
            if let Ok(table) = engine.db.table(&name) {
                engine.attach(&table);
            }
        }
        engine
    }

    /// Subscribe to a table's write stream. Tables created after the engine
    /// must be attached explicitly.
    pub fn attach(self: &Arc<Self>, table: &Arc<Table>) {
        let weak = Arc::downgrade(self);
        let name = table.name().to_string();
        table.add_observer(Arc::new(move |row: &Row| {
            if let Some(engine) = weak.upgrade() {
                engine.inner.lock().pending.push((name.clone(), row.clone()));
            }
        }));
    }

    pub fn database(&self) -> &Arc<Database> {
        &self.db
    }

    /// Register a continuous (or view-eligible snapshot) query. Static
    /// rewrite links matching views at registration time; SYNC queries are
    /// scheduled and ASYNC queries subscribe to coverage triggers.
    pub fn register(&self, spec: QuerySpec) -> Result<QueryId> {
        let table = self.db.table(&spec.table)?;
        spec.validate(&table.schema)?;
        let mut inner = self.inner.lock();
        let id = inner.next_query_id;
        inner.next_query_id += 1;
        let next_due = match spec.mode {
            QueryMode::Sync { interval_secs } => Some(inner.now + interval_secs),
            _ => None,
        };
        let linked_views = self.match_views_locked(&inner, &spec);
        inner.queries.insert(
            id,
            ContinuousQuery {
                id,
                spec,
                linked_views,
                last_digest: 0,
                exec_count: 0,
                mean_latency_ms: 0.0,
                trigger_rate_ewma: DEFAULT_ASYNC_RATE,
                next_due,
                last_trigger_at: None,
            },
        );
        inner.registrations_since_select += 1;
        let due_reselect = inner.registrations_since_select >= self.options.reselect_every;
        drop(inner);
        if due_reselect {
            self.reselect()?;
        }
        Ok(id)
    }

    pub fn drop_query(&self, id: QueryId) -> Result<()> {
        let mut inner = self.inner.lock();
        inner
            .queries
            .remove(&id)
            .map(|_| ())
            .ok_or(Error::UnknownViewOrQuery(id))?;
        inner.async_queue.remove(&id);
        Ok(())
    }

    pub fn queries(&self) -> Vec<ContinuousQuery> {
        self.inner.lock().queries.values().cloned().collect()
    }

    pub fn views_summary(&self) -> Vec<(ViewId, String, u64, u64, u64)> {
        let inner = self.inner.lock();
        inner
            .catalog
            .ids()
            .into_iter()
            .filter_map(|id| {
                inner.catalog.get(id).map(|v| {
                    (
                        id,
                        v.flavor.name().to_string(),
                        v.storage_bytes as u64,
                        v.watermark,
                        v.hit_count,
                    )
                })
            })
            .collect()
    }

    pub fn total_view_bytes(&self) -> u64 {
        self.inner.lock().catalog.total_bytes()
    }

    pub fn take_log(&self) -> Vec<ExecutionLogLine> {
        std::mem::take(&mut self.inner.lock().log)
    }

    /// Cluster registered query shapes, select under the budget, and build
    /// the selected views. Existing views are replaced wholesale.
    pub fn reselect(&self) -> Result<()> {
        let (spatial_shapes, vector_shapes) = self.collect_shapes()?;
        let clusters = cluster_queries(&spatial_shapes, &vector_shapes);

        let mut candidates = Vec::new();
        for cluster in clusters {
            let (benefit, storage) = self.estimate_candidate(&cluster)?;
            candidates.push(Candidate {
                cluster,
                benefit,
                storage_estimate: storage,
            });
        }
        let picks = select_views(&candidates, self.options.budget_bytes);

        {
            let mut inner = self.inner.lock();
            for id in inner.catalog.ids() {
                inner.catalog.remove(id);
            }
            inner.registrations_since_select = 0;
        }
        for pick in picks {
            let candidate = &candidates[pick];
            let view = self.build_view(&candidate.cluster, candidate.benefit)?;
            let mut inner = self.inner.lock();
            // budget race: actual size may exceed the estimate; roll back
            // this selection rather than overshoot
            if inner.catalog.total_bytes() + view.storage_bytes as u64 > self.options.budget_bytes {
                continue;
            }
            inner.catalog.insert(view);
        }
        // static rewrites reflect the new catalog
        let mut inner = self.inner.lock();
        let ids: Vec<QueryId> = inner.queries.keys().copied().collect();
        for id in ids {
            let spec = inner.queries[&id].spec.clone();
            let linked = self.match_views_locked(&inner, &spec);
            inner.queries.get_mut(&id).unwrap().linked_views = linked;
        }
        Ok(())
    }

    fn collect_shapes(&self) -> Result<(Vec<SpatialShape>, Vec<VectorShape>)> {
        let inner = self.inner.lock();
        let mut spatial = Vec::new();
        let mut vector = Vec::new();
        for query in inner.queries.values() {
            let frequency = match query.spec.mode {
                QueryMode::Sync { interval_secs } => 1.0 / interval_secs.max(1e-6),
                QueryMode::Async => query.trigger_rate_ewma,
                QueryMode::Snapshot => continue,
            };
            let table = self.db.table(&query.spec.table)?;
            let snap = table.snapshot();
            let direct_cost = plans_for(&snap, &query.spec)?
                .iter()
                .map(|p| p.estimated_cost)
                .fold(f64::INFINITY, f64::min);
            let weighted = direct_cost * frequency;
            if let Some((idx, column, rect)) = spatial_shape_of(&query.spec) {
                let base: Vec<Predicate> = query
                    .spec
                    .filters
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != idx)
                    .map(|(_, p)| p.clone())
                    .collect();
                spatial.push(SpatialShape {
                    query_id: query.id,
                    table: query.spec.table.clone(),
                    column: column.to_string(),
                    rect,
                    base_filters: base,
                    weighted_cost: weighted,
                });
            } else if let Some((column, embedding, k)) = vector_shape_of(&query.spec) {
                vector.push(VectorShape {
                    query_id: query.id,
                    table: query.spec.table.clone(),
                    column: column.to_string(),
                    embedding: embedding.to_vec(),
                    k,
                    base_filters: query.spec.filters.clone(),
                    weighted_cost: weighted,
                });
            }
        }
        Ok((spatial, vector))
    }

    fn estimate_candidate(&self, cluster: &QueryCluster) -> Result<(f64, u64)> {
        match cluster {
            QueryCluster::Spatial { table, column, union_rect, base_filters, benefit, .. } => {
                let table = self.db.table(table)?;
                let snap = table.snapshot();
                let ctx = PlanContext::new(&snap.schema, &snap, None);
                let pred = Predicate::SpatialContains {
                    column: column.clone(),
                    region: GeometryValue::Rect(*union_rect),
                };
                let mut sel = ctx.stats.estimate_selectivity(&pred);
                for filter in base_filters {
                    sel *= ctx.stats.estimate_selectivity(filter);
                }
                let rows = ctx.stats.total_rows() as f64 * sel;
                let avg_row = if ctx.stats.total_rows() > 0 {
                    ctx.stats.total_bytes() as f64 / ctx.stats.total_rows() as f64
                } else {
                    128.0
                };
                Ok((*benefit, (rows * avg_row) as u64))
            }
            QueryCluster::Vector { table, max_k, benefit, .. } => {
                let table = self.db.table(table)?;
                let snap = table.snapshot();
                let ctx = PlanContext::new(&snap.schema, &snap, None);
                let avg_row = if ctx.stats.total_rows() > 0 {
                    ctx.stats.total_bytes() as f64 / ctx.stats.total_rows() as f64
                } else {
                    128.0
                };
                let xk = self.options.xk_factor * max_k;
                Ok((*benefit, (xk as f64 * avg_row) as u64))
            }
        }
    }

    /// Populate a view by executing its defining query at a snapshot; the
    /// watermark is that snapshot's sequence bound.
    fn build_view(&self, cluster: &QueryCluster, benefit: f64) -> Result<MaterializedView> {
        let id = {
            let mut inner = self.inner.lock();
            let id = inner.next_view_id;
            inner.next_view_id += 1;
            id
        };
        match cluster {
            QueryCluster::Spatial { table, column, union_rect, base_filters, .. } => {
                let table_ref = self.db.table(table)?;
                let snap = table_ref.snapshot();
                let mut filters = base_filters.clone();
                filters.push(Predicate::SpatialContains {
                    column: column.clone(),
                    region: GeometryValue::Rect(*union_rect),
                });
                let spec = QuerySpec::filter_only(table, filters);
                let (results, _) = execute_at(&snap, &spec)?;
                let rows = results
                    .into_iter()
                    .map(|r| ViewRow {
                        key: r.key,
                        values: r.columns.into_iter().map(|(_, v)| v).collect(),
                        sort_score: 0.0,
                    })
                    .collect();
                let mut view = MaterializedView {
                    id,
                    table: table.clone(),
                    flavor: ViewFlavor::SpatialRange {
                        column: column.clone(),
                        region: *union_rect,
                    },
                    base_filters: base_filters.clone(),
                    rows,
                    storage_bytes: 0,
                    benefit,
                    watermark: snap.seqno,
                    stale_refill: false,
                    hit_count: 0,
                };
                view.recompute_bytes();
                Ok(view)
            }
            QueryCluster::Vector { table, column, center, radius, max_k, base_filters, .. } => {
                let table_ref = self.db.table(table)?;
                let snap = table_ref.snapshot();
                let xk = self.options.xk_factor * max_k;
                let spec = QuerySpec {
                    table: table.clone(),
                    select: Vec::new(),
                    filters: base_filters.clone(),
                    rank: Some(RankSpec {
                        terms: vec![RankTerm {
                            modality: Modality::Vector,
                            column: column.clone(),
                            query: RankQueryValue::Vector(center.clone()),
                            weight: 1.0,
                        }],
                        k: xk,
                    }),
                    mode: QueryMode::Snapshot,
                    options: Default::default(),
                };
                let (results, _) = execute_at(&snap, &spec)?;
                let rows = results
                    .into_iter()
                    .map(|r| ViewRow {
                        key: r.key,
                        sort_score: r.score.unwrap_or(0.0),
                        values: r.columns.into_iter().map(|(_, v)| v).collect(),
                    })
                    .collect();
                let mut view = MaterializedView {
                    id,
                    table: table.clone(),
                    flavor: ViewFlavor::VectorNn {
                        column: column.clone(),
                        center: center.clone(),
                        radius: *radius,
                        xk,
                    },
                    base_filters: base_filters.clone(),
                    rows,
                    storage_bytes: 0,
                    benefit,
                    watermark: snap.seqno,
                    stale_refill: false,
                    hit_count: 0,
                };
                view.recompute_bytes();
                Ok(view)
            }
        }
    }

    /// Usable views for a spec: containment for spatial filters, admission
    /// sphere plus capacity for vector rank; base filters must be implied.
    /// Greedy pick: smallest containing rect / nearest center.
    fn match_views_locked(&self, inner: &Inner, spec: &QuerySpec) -> Vec<ViewId> {
        if let Some((idx, column, rect)) = spatial_shape_of(spec) {
            let others: Vec<Predicate> = spec
                .filters
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != idx)
                .map(|(_, p)| p.clone())
                .collect();
            let mut matches: Vec<(f64, ViewId)> = inner
                .catalog
                .iter()
                .filter_map(|view| match &view.flavor {
                    ViewFlavor::SpatialRange { column: vc, region } if vc == column && view.table == spec.table => {
                        let contains = region[0] <= rect[0]
                            && region[1] <= rect[1]
                            && region[2] >= rect[2]
                            && region[3] >= rect[3];
                        let implied = filters_imply(&view.base_filters, &others);
                        (contains && implied).then(|| {
                            let area = (region[2] - region[0]) * (region[3] - region[1]);
                            (area, view.id)
                        })
                    }
                    _ => None,
                })
                .collect();
            matches.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            return matches.into_iter().map(|(_, id)| id).collect();
        }
        if let Some((column, query, k)) = vector_shape_of(spec) {
            let mut matches: Vec<(f64, ViewId)> = inner
                .catalog
                .iter()
                .filter_map(|view| match &view.flavor {
                    ViewFlavor::VectorNn { column: vc, radius, xk, .. }
                        if vc == column && view.table == spec.table =>
                    {
                        let d = view.center_distance(query)?;
                        let implied = filters_imply(&view.base_filters, &spec.filters);
                        (d <= *radius && *xk >= k && implied).then_some((d, view.id))
                    }
                    _ => None,
                })
                .collect();
            matches.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            return matches.into_iter().map(|(_, id)| id).collect();
        }
        Vec::new()
    }

    pub fn match_views(&self, spec: &QuerySpec) -> Vec<ViewId> {
        let inner = self.inner.lock();
        self.match_views_locked(&inner, spec)
    }

    /// Apply buffered deltas to every covered view; returns affected view
    /// ids. Watermarks advance per view; async queries whose trigger region
    /// covers a change are queued (coalesced).
    pub fn apply_pending_deltas(&self) -> Result<Vec<ViewId>> {
        let pending = {
            let mut inner = self.inner.lock();
            std::mem::take(&mut inner.pending)
        };
        if pending.is_empty() {
            return Ok(Vec::new());
        }
        let mut affected = BTreeSet::new();
        let mut to_refill: BTreeSet<ViewId> = BTreeSet::new();

        for (table_name, row) in &pending {
            let table = self.db.table(table_name)?;
            let snap = table.snapshot();
            let schema = &table.schema;

            // pre-image for deletes and updates
            let pre_image = if row.seqno > 0 {
                table.snapshot_at(row.seqno - 1).get(&row.key)?
            } else {
                None
            };

            let mut inner = self.inner.lock();
            let mut touched: BTreeSet<ViewId> = BTreeSet::new();
            // route by the old attributes: removals
            if let Some(old) = &pre_image {
                for (idx, col) in schema.columns.iter().enumerate() {
                    match old.values.get(idx) {
                        Some(AttributeValue::Geometry(GeometryValue::Point([x, y]))) => {
                            for id in inner.catalog.probe_point(table_name, *x, *y) {
                                touched.insert(id);
                            }
                            let _ = col;
                        }
                        Some(AttributeValue::Vector(v)) => {
                            for id in inner.catalog.probe_vector(table_name, v) {
                                touched.insert(id);
                            }
                        }
                        _ => {}
                    }
                }
                // pooled rows may sit in views whose coverage shrank
                for id in inner.catalog.views_holding_key(table_name, &row.key) {
                    touched.insert(id);
                }
            }
            // route by the new attributes: insertions
            if !row.tombstone {
                for (idx, _col) in schema.columns.iter().enumerate() {
                    match row.values.get(idx) {
                        Some(AttributeValue::Geometry(GeometryValue::Point([x, y]))) => {
                            for id in inner.catalog.probe_point(table_name, *x, *y) {
                                touched.insert(id);
                            }
                        }
                        Some(AttributeValue::Vector(v)) => {
                            for id in inner.catalog.probe_vector(table_name, v) {
                                touched.insert(id);
                            }
                        }
                        _ => {}
                    }
                }
            }

            for id in touched {
                let Some(view) = inner.catalog.get_mut(id) else {
                    continue;
                };
                if view.watermark >= row.seqno || view.table != *table_name {
                    continue; // already applied (exactly-once per view)
                }
                affected.insert(id);
                match view.flavor.clone() {
                    ViewFlavor::SpatialRange { column, region } => {
                        let col_idx = schema.column_index(&column);
                        let inside_new = !row.tombstone
                            && col_idx
                                .and_then(|i| row.values.get(i))
                                .and_then(|v| v.as_point())
                                .map(|(x, y)| {
                                    x >= region[0] && x <= region[2] && y >= region[1] && y <= region[3]
                                })
                                .unwrap_or(false);
                        let passes = inside_new
                            && view
                                .base_filters
                                .iter()
                                .all(|p| eval_predicate(&snap, row, p));
                        if passes {
                            view.spatial_upsert(ViewRow {
                                key: row.key.clone(),
                                values: row.values.clone(),
                                sort_score: 0.0,
                            });
                        } else {
                            view.remove_key(&row.key);
                        }
                        view.watermark = row.seqno;
                        view.recompute_bytes();
                    }
                    ViewFlavor::VectorNn { column, center, .. } => {
                        let col_idx = schema.column_index(&column);
                        let was_pooled = view.rows.iter().any(|r| r.key == row.key);
                        let qualifies = !row.tombstone
                            && view
                                .base_filters
                                .iter()
                                .all(|p| eval_predicate(&snap, row, p));
                        let new_distance = col_idx
                            .and_then(|i| row.values.get(i))
                            .and_then(|v| v.as_vector())
                            .filter(|v| v.len() == center.len())
                            .map(|v| l2(&center, v));
                        match (qualifies, new_distance) {
                            (true, Some(d)) => {
                                let offered = view.pool_offer(ViewRow {
                                    key: row.key.clone(),
                                    values: row.values.clone(),
                                    sort_score: d,
                                });
                                if was_pooled && !offered {
                                    // lost a pooled member without refill
                                    view.stale_refill = true;
                                    to_refill.insert(id);
                                }
                            }
                            _ => {
                                if view.remove_key(&row.key) {
                                    view.stale_refill = true;
                                    to_refill.insert(id);
                                }
                            }
                        }
                        view.watermark = row.seqno;
                        view.recompute_bytes();
                    }
                }
            }

            // async coverage triggers
            let query_ids: Vec<QueryId> = inner.queries.keys().copied().collect();
            for qid in query_ids {
                let query = &inner.queries[&qid];
                if query.spec.mode != QueryMode::Async || query.spec.table != *table_name {
                    continue;
                }
                if Self::triggers(&snap, &query.spec, row, pre_image.as_ref()) {
                    let now = inner.now;
                    let query = inner.queries.get_mut(&qid).unwrap();
                    if let Some(last) = query.last_trigger_at {
                        let gap = (now - last).max(1e-3);
                        query.trigger_rate_ewma =
                            EWMA_ALPHA * (1.0 / gap) + (1.0 - EWMA_ALPHA) * query.trigger_rate_ewma;
                    }
                    query.last_trigger_at = Some(now);
                    inner.async_queue.insert(qid);
                }
            }
        }

        // rebuild flagged pools from scratch, then re-enforce the budget
        for id in to_refill {
            self.refill_view(id)?;
        }
        {
            let mut inner = self.inner.lock();
            inner.catalog.rebuild();
            while inner.catalog.total_bytes() > self.options.budget_bytes {
                let victim = inner
                    .catalog
                    .iter()
                    .min_by(|a, b| {
                        let da = a.benefit / (a.storage_bytes.max(1) as f64);
                        let db = b.benefit / (b.storage_bytes.max(1) as f64);
                        da.total_cmp(&db)
                    })
                    .map(|v| v.id);
                match victim {
                    Some(id) => {
                        inner.catalog.remove(id);
                    }
                    None => break,
                }
            }
        }
        Ok(affected.into_iter().collect())
    }

    /// Does a change (new row or its pre-image) fall inside an async query's
    /// trigger region?
    fn triggers(snap: &Snapshot, spec: &QuerySpec, row: &Row, pre: Option<&Row>) -> bool {
        let region_pred = spec
            .filters
            .iter()
            .find(|p| matches!(p, Predicate::SpatialContains { .. }));
        let keyword_pred = spec.filters.iter().find(|p| matches!(p, Predicate::Keyword { .. }));
        let candidates: Vec<&Row> = [Some(row), pre].into_iter().flatten().collect();
        if let Some(pred) = region_pred {
            return candidates
                .iter()
                .any(|r| !r.tombstone && eval_predicate(snap, r, pred))
                || (row.tombstone && pre.map(|r| eval_predicate(snap, r, pred)).unwrap_or(false));
        }
        if let Some(pred) = keyword_pred {
            return candidates
                .iter()
                .any(|r| !r.tombstone && eval_predicate(snap, r, pred))
                || (row.tombstone && pre.map(|r| eval_predicate(snap, r, pred)).unwrap_or(false));
        }
        true // no region-like filter: any table write triggers
    }

    fn refill_view(&self, id: ViewId) -> Result<()> {
        let (cluster, benefit, old_id) = {
            let inner = self.inner.lock();
            let Some(view) = inner.catalog.get(id) else {
                return Ok(());
            };
            let cluster = match &view.flavor {
                ViewFlavor::VectorNn { column, center, radius, xk } => QueryCluster::Vector {
                    table: view.table.clone(),
                    column: column.clone(),
                    base_filters: view.base_filters.clone(),
                    members: vec![],
                    center: center.clone(),
                    radius: *radius,
                    max_k: (*xk / self.options.xk_factor).max(1),
                    benefit: view.benefit,
                },
                ViewFlavor::SpatialRange { column, region } => QueryCluster::Spatial {
                    table: view.table.clone(),
                    column: column.clone(),
                    base_filters: view.base_filters.clone(),
                    members: vec![],
                    union_rect: *region,
                    benefit: view.benefit,
                },
            };
            (cluster, view.benefit, view.id)
        };
        let mut rebuilt = self.build_view(&cluster, benefit)?;
        let mut inner = self.inner.lock();
        if let Some(old) = inner.catalog.remove(old_id) {
            rebuilt.id = old.id;
            rebuilt.hit_count = old.hit_count;
            rebuilt.benefit = old.benefit;
        }
        rebuilt.stale_refill = false;
        inner.catalog.insert(rebuilt);
        Ok(())
    }

    /// Execute a spec through the freshest matching view, falling back to
    /// direct execution. `linked` carries the static rewrite when present.
    fn execute_spec(
        &self,
        spec: &QuerySpec,
        linked: &[ViewId],
    ) -> Result<(Vec<ResultRow>, ExecutionReport)> {
        // refresh-on-read keeps SYNC answers exact at their snapshot
        self.apply_pending_deltas()?;
        let candidates: Vec<ViewId> = if linked.is_empty() {
            self.match_views(spec)
        } else {
            linked.to_vec()
        };
        for id in candidates {
            match self.try_rewrite(spec, id)? {
                Some(result) => return Ok(result),
                None => continue, // dropped/stale view: try next, else direct
            }
        }
        let table = self.db.table(&spec.table)?;
        let (rows, report) = crate::query::execute(&table, spec)?;
        Ok((rows, report))
    }

    /// Answer from one view if it is usable: spatial rewrites scan the view
    /// rows under the full predicate set (exact); vector rewrites re-rank
    /// the xk pool by the query's own score (approximate unless the query
    /// coincides with the view definition).
    fn try_rewrite(&self, spec: &QuerySpec, id: ViewId) -> Result<Option<(Vec<ResultRow>, ExecutionReport)>> {
        let table = self.db.table(&spec.table)?;
        let snap = table.snapshot();
        let mut inner = self.inner.lock();
        let Some(view) = inner.catalog.get(id) else {
            return Ok(None);
        };
        if view.stale_refill {
            return Ok(None);
        }
        let started = std::time::Instant::now();
        let result = match (&view.flavor, &spec.rank) {
            (ViewFlavor::SpatialRange { .. }, None) => {
                let mut rows: Vec<ResultRow> = Vec::new();
                for vrow in &view.rows {
                    let row = Row {
                        key: vrow.key.clone(),
                        seqno: view.watermark,
                        tombstone: false,
                        values: vrow.values.clone(),
                    };
                    if spec.filters.iter().all(|p| eval_predicate(&snap, &row, p)) {
                        rows.push(ResultRow {
                            columns: project_view(&snap, &row, &spec.select),
                            distances: Vec::new(),
                            score: None,
                            key: row.key,
                        });
                    }
                }
                rows.sort_by(|a, b| a.key.cmp(&b.key));
                Some((rows, true))
            }
            (ViewFlavor::VectorNn { center, .. }, Some(rank)) => {
                let term = &rank.terms[0];
                let RankQueryValue::Vector(q) = &term.query else {
                    return Ok(None);
                };
                let col_idx = snap.schema.column_index(&term.column);
                let mut scored: Vec<(f64, &ViewRow)> = Vec::new();
                for vrow in &view.rows {
                    let row = Row {
                        key: vrow.key.clone(),
                        seqno: view.watermark,
                        tombstone: false,
                        values: vrow.values.clone(),
                    };
                    if !spec.filters.iter().all(|p| eval_predicate(&snap, &row, p)) {
                        continue;
                    }
                    let Some(v) = col_idx.and_then(|i| vrow.values.get(i)).and_then(|v| v.as_vector())
                    else {
                        continue;
                    };
                    if v.len() != q.len() {
                        continue;
                    }
                    scored.push((l2(v, q) * term.weight, vrow));
                }
                scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.key.cmp(&b.1.key)));
                scored.truncate(rank.k);
                let exact = q == center && spec.filters == view.base_filters;
                let rows: Vec<ResultRow> = scored
                    .into_iter()
                    .map(|(score, vrow)| {
                        let row = Row {
                            key: vrow.key.clone(),
                            seqno: view.watermark,
                            tombstone: false,
                            values: vrow.values.clone(),
                        };
                        ResultRow {
                            columns: project_view(&snap, &row, &spec.select),
                            distances: vec![(rank.terms[0].column.clone(), score)],
                            score: Some(score),
                            key: row.key,
                        }
                    })
                    .collect();
                Some((rows, exact))
            }
            _ => None,
        };
        let Some((rows, exact)) = result else {
            return Ok(None);
        };
        if let Some(view) = inner.catalog.get_mut(id) {
            view.hit_count += 1;
        }
        let report = ExecutionReport {
            plan: format!("ViewRewrite(view={id})"),
            estimated_cost: 0.0,
            estimated_rows: rows.len() as f64,
            actual_rows: rows.len() as u64,
            block_reads: 0,
            consumed_entries: None,
            used_view: Some(id),
            exact,
        };
        let _ = started;
        Ok(Some((rows, report)))
    }

    /// Execute a registered query now (rewrite path), updating its stats and
    /// the metrics log.
    pub fn execute_query(&self, id: QueryId) -> Result<Vec<ResultRow>> {
        let (spec, linked) = {
            let inner = self.inner.lock();
            let query = inner.queries.get(&id).ok_or(Error::UnknownViewOrQuery(id))?;
            (query.spec.clone(), query.linked_views.clone())
        };
        let started = std::time::Instant::now();
        let (rows, report) = self.execute_spec(&spec, &linked)?;
        let latency_ms = started.elapsed().as_secs_f64() * 1000.0;
        let mut inner = self.inner.lock();
        let mode = match spec.mode {
            QueryMode::Snapshot => "snapshot",
            QueryMode::Sync { .. } => "sync",
            QueryMode::Async => "async",
        };
        let digest = digest_rows(&rows);
        inner.log.push(ExecutionLogLine {
            query_id: id,
            mode: mode.into(),
            used_views: report.used_view.into_iter().collect(),
            latency_ms,
            exact: report.exact,
            rows: rows.len(),
            digest,
        });
        if let Some(query) = inner.queries.get_mut(&id) {
            query.exec_count += 1;
            let n = query.exec_count as f64;
            query.mean_latency_ms += (latency_ms - query.mean_latency_ms) / n;
            query.last_digest = digest;
        }
        Ok(rows)
    }

    /// One-off snapshot query with dynamic rewriting.
    pub fn execute_snapshot(&self, spec: &QuerySpec) -> Result<(Vec<ResultRow>, ExecutionReport)> {
        self.execute_spec(spec, &[])
    }

    /// Advance the scheduler clock: apply pending deltas, fire due SYNC
    /// queries once per due deadline, and drain the coalesced ASYNC queue.
    /// Returns the ids executed this tick.
    pub fn scheduler_tick(&self, now_secs: f64) -> Result<Vec<QueryId>> {
        self.apply_pending_deltas()?;
        let mut fired = Vec::new();
        let due: Vec<QueryId> = {
            let mut inner = self.inner.lock();
            inner.now = now_secs;
            inner
                .queries
                .values()
                .filter(|q| q.next_due.map(|d| d <= now_secs).unwrap_or(false))
                .map(|q| q.id)
                .collect()
        };
        for id in due {
            self.execute_query(id)?;
            let mut inner = self.inner.lock();
            if let Some(query) = inner.queries.get_mut(&id) {
                if let QueryMode::Sync { interval_secs } = query.spec.mode {
                    let mut next = query.next_due.unwrap_or(now_secs) + interval_secs;
                    if next <= now_secs {
                        next = now_secs + interval_secs; // skip missed deadlines
                    }
                    query.next_due = Some(next);
                }
            }
            fired.push(id);
        }
        let async_due: Vec<QueryId> = {
            let mut inner = self.inner.lock();
            let drained: Vec<QueryId> = inner.async_queue.iter().copied().collect();
            inner.async_queue.clear();
            drained
        };
        for id in async_due {
            if self.inner.lock().queries.contains_key(&id) {
                self.execute_query(id)?;
                fired.push(id);
            }
        }
        Ok(fired)
    }

    /// Pending async executions (coalesced), visible for tests.
    pub fn async_queue_len(&self) -> usize {
        self.inner.lock().async_queue.len()
    }
}

fn project_view(snap: &Snapshot, row: &Row, select: &[String]) -> Vec<(String, AttributeValue)> {
    let names: Vec<&str> = if select.is_empty() {
        snap.schema.columns.iter().map(|c| c.name.as_str()).collect()
    } else {
        select.iter().map(|s| s.as_str()).collect()
    };
    names
        .into_iter()
        .map(|name| {
            let value = snap
                .schema
                .column_index(name)
                .and_then(|i| row.values.get(i))
                .cloned()
                .unwrap_or(AttributeValue::Null);
            (name.to_string(), value)
        })
        .collect()
}
