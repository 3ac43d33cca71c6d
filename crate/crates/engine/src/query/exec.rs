//! Hybrid query execution: filter plans over candidate sets with snapshot
//! visibility, rank plans over merged sorted-distance iterators with NRA
//! aggregation, and the explain report.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::error::{Error, Result};
use crate::index::{
    CandidateRow, CandidateSet, MergedDistanceIterator, QuerySummary, RowLocation, ScoredItem,
    SegmentOrdinals, SortedDistanceIterator, VecDistanceIterator,
};
use crate::query::nra::{nra_topk, NraReport};
use crate::query::plan::{
    choose_plan, cost_plan, enumerate_plans, find_forced, CostedPlan, PlanContext, PlanNode,
};
use crate::query::spec::{Modality, NraMode, Predicate, QuerySpec, RankQueryValue, RankTerm};
use crate::schema::IndexKind;
use crate::spatial::euclid;
use crate::storage::segment::Segment;
use crate::storage::{Snapshot, Table};
use crate::text::{idf, score_to_distance, tokenize};
use crate::value::{AttributeValue, KeyValue, Row};
use crate::vector::l2;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub key: KeyValue,
    pub columns: Vec<(String, AttributeValue)>,
    /// Per-modality distances: rank terms and vector-threshold filters.
    pub distances: Vec<(String, f64)>,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ExecutionReport {
    pub plan: String,
    pub estimated_cost: f64,
    pub estimated_rows: f64,
    pub actual_rows: u64,
    pub block_reads: u64,
    pub consumed_entries: Option<u64>,
    /// Set by the view layer when a rewrite answered the query.
    pub used_view: Option<u64>,
    pub exact: bool,
}

/// Evaluate one predicate against a resolved row.
pub fn eval_predicate(snap: &Snapshot, row: &Row, pred: &Predicate) -> bool {
    let Some(value) = snap.column_value(row, pred.column()) else {
        return false;
    };
    if value.is_null() {
        return false;
    }
    match pred {
        Predicate::ScalarRange { lo, hi, .. } => {
            match crate::index::ScalarKey::from_value(value) {
                Some(v) => v >= lo.to_key() && v <= hi.to_key(),
                None => false,
            }
        }
        Predicate::VectorThreshold { query, threshold, .. } => match value.as_vector() {
            Some(v) if v.len() == query.len() => l2(v, query) < *threshold,
            _ => false,
        },
        Predicate::SpatialContains { region, .. } => match value.as_point() {
            Some((x, y)) => region.contains_point(x, y),
            None => false,
        },
        Predicate::Keyword { term, .. } => match value.as_text() {
            Some(text) => tokenize(text).iter().any(|t| t == term),
            None => false,
        },
    }
}

fn segment_map(snap: &Snapshot) -> HashMap<u64, Arc<Segment>> {
    snap.state.segments.iter().map(|s| (s.id, s.clone())).collect()
}

fn predicate_summary(pred: &Predicate) -> QuerySummary {
    match pred {
        Predicate::ScalarRange { lo, hi, .. } => QuerySummary::Range {
            lo: Some(lo.to_key()),
            hi: Some(hi.to_key()),
        },
        Predicate::SpatialContains { region, .. } => QuerySummary::Rect {
            rect: region.bounding_rect(),
        },
        Predicate::Keyword { term, .. } => QuerySummary::Term { term: term.clone() },
        Predicate::VectorThreshold { .. } => QuerySummary::Vector,
    }
}

/// Index lookup for one served predicate across all pruned segments.
fn leg_candidates(
    snap: &Snapshot,
    pred: &Predicate,
    ordinals: &SegmentOrdinals,
    segments: &HashMap<u64, Arc<Segment>>,
) -> Result<CandidateSet> {
    let mut set = CandidateSet::new();
    let summary = predicate_summary(pred);
    for (segment_id, root) in snap.state.global.prune(pred.column(), &summary) {
        let Some(segment) = segments.get(&segment_id) else {
            continue;
        };
        match pred {
            Predicate::ScalarRange { lo, hi, .. } => {
                let lo = lo.to_key();
                let hi = hi.to_key();
                for (ordinal, row, _) in
                    crate::index::btree::lookup(segment, root, Some(&lo), Some(&hi), &snap.cache)?
                {
                    set.insert(ordinals.pack(segment_id, ordinal), row);
                }
            }
            Predicate::SpatialContains { region, .. } => {
                for (ordinal, row) in crate::spatial::range_filter(segment, root, region, &snap.cache)? {
                    set.insert(ordinals.pack(segment_id, ordinal), row);
                }
            }
            Predicate::Keyword { term, .. } => {
                for (ordinal, row) in crate::text::keyword_lookup(segment, root, term, &snap.cache)? {
                    set.insert(ordinals.pack(segment_id, ordinal), row);
                }
            }
            Predicate::VectorThreshold { query, threshold, .. } => {
                for (ordinal, row, _d) in
                    crate::vector::threshold_scan(segment, root, query, *threshold, &snap.cache)?
                {
                    set.insert(ordinals.pack(segment_id, ordinal), row);
                }
            }
        }
    }
    set.seal();
    Ok(set)
}

fn fetch_candidate(
    snap: &Snapshot,
    segments: &HashMap<u64, Arc<Segment>>,
    cand: &CandidateRow,
) -> Result<Option<Row>> {
    if !snap.is_visible(&cand.key, cand.seqno)? {
        return Ok(None);
    }
    match cand.location {
        RowLocation::Disk(handle) => {
            let Some(segment) = segments.get(&handle.segment_id) else {
                return Ok(None);
            };
            segment.fetch(handle, &cand.key, cand.seqno, &snap.cache)
        }
        RowLocation::Memtable => snap.get(&cand.key),
    }
}

/// Run a filter-only plan, returning visible rows satisfying every filter.
fn run_filter_plan(snap: &Snapshot, spec: &QuerySpec, plan: &PlanNode) -> Result<Vec<Row>> {
    let segments = segment_map(snap);
    let ordinals = SegmentOrdinals::new(&snap.state.segments);
    let mut rows = match plan {
        PlanNode::FullScan { .. } => {
            let mut rows = snap.scan()?;
            rows.retain(|row| spec.filters.iter().all(|p| eval_predicate(snap, row, p)));
            rows
        }
        PlanNode::IndexFilter { leg, residuals } => {
            let set = leg_candidates(snap, &spec.filters[leg.filter_idx], &ordinals, &segments)?;
            let mut rows = Vec::with_capacity(set.len());
            for (_, cand) in set.iter() {
                if let Some(row) = fetch_candidate(snap, &segments, cand)? {
                    if residuals.iter().all(|&i| eval_predicate(snap, &row, &spec.filters[i])) {
                        rows.push(row);
                    }
                }
            }
            // index paths cover segments only; the memtable overlay is
            // evaluated directly
            for row in snap.memtable_overlay() {
                if spec.filters.iter().all(|p| eval_predicate(snap, &row, p)) {
                    rows.push(row);
                }
            }
            rows
        }
        PlanNode::IndexIntersect { legs, residuals } => {
            let mut set: Option<CandidateSet> = None;
            for leg in legs {
                let leg_set = leg_candidates(snap, &spec.filters[leg.filter_idx], &ordinals, &segments)?;
                set = Some(match set {
                    None => leg_set,
                    Some(acc) => acc.intersect(&leg_set),
                });
            }
            let set = set.unwrap_or_default();
            let mut rows = Vec::with_capacity(set.len());
            for (_, cand) in set.iter() {
                if let Some(row) = fetch_candidate(snap, &segments, cand)? {
                    if residuals.iter().all(|&i| eval_predicate(snap, &row, &spec.filters[i])) {
                        rows.push(row);
                    }
                }
            }
            for row in snap.memtable_overlay() {
                if spec.filters.iter().all(|p| eval_predicate(snap, &row, p)) {
                    rows.push(row);
                }
            }
            rows
        }
        PlanNode::NraTopK { .. } | PlanNode::ScanSort => {
            return Err(Error::InvalidQuery("rank plan used as filter plan".into()))
        }
    };
    rows.sort_by(|a, b| a.key.cmp(&b.key));
    rows.dedup_by(|a, b| a.key == b.key);
    Ok(rows)
}

/// Per-source text scoring stats, resolved lazily. Scores follow the
/// segment-local idf convention of the inverted index; memtable rows score
/// against the overlay corpus.
struct TextScorer<'a> {
    snap: &'a Snapshot,
    column: String,
    cache: Mutex<HashMap<u64, Arc<(u64, HashMap<String, u32>)>>>,
    overlay: Mutex<Option<Arc<(u64, HashMap<String, u32>)>>>,
}

impl<'a> TextScorer<'a> {
    fn new(snap: &'a Snapshot, column: &str) -> Self {
        TextScorer {
            snap,
            column: column.to_string(),
            cache: Mutex::new(HashMap::new()),
            overlay: Mutex::new(None),
        }
    }

    fn segment_stats(&self, segment: &Arc<Segment>) -> Result<Arc<(u64, HashMap<String, u32>)>> {
        if let Some(hit) = self.cache.lock().get(&segment.id) {
            return Ok(hit.clone());
        }
        let stats = if let Some(root) = segment.index_regions.get(&self.column) {
            let dict = crate::text::read_dictionary(segment, *root, &self.snap.cache)?;
            let df: HashMap<String, u32> =
                dict.terms.iter().map(|(t, _, df)| (t.clone(), *df)).collect();
            Arc::new((dict.doc_count, df))
        } else {
            Arc::new((0, HashMap::new()))
        };
        self.cache.lock().insert(segment.id, stats.clone());
        Ok(stats)
    }

    fn overlay_stats(&self) -> Arc<(u64, HashMap<String, u32>)> {
        let mut guard = self.overlay.lock();
        if let Some(hit) = guard.as_ref() {
            return hit.clone();
        }
        let col_idx = self.snap.schema.column_index(&self.column);
        let mut doc_count = 0u64;
        let mut df: HashMap<String, u32> = HashMap::new();
        if let Some(idx) = col_idx {
            for row in self.snap.memtable_overlay() {
                if let Some(text) = row.values.get(idx).and_then(|v| v.as_text()) {
                    doc_count += 1;
                    let mut seen = HashSet::new();
                    for term in tokenize(text) {
                        if seen.insert(term.clone()) {
                            *df.entry(term).or_insert(0) += 1;
                        }
                    }
                }
            }
        }
        let stats = Arc::new((doc_count, df));
        *guard = Some(stats.clone());
        stats
    }

    /// Distance of one visible document for the query terms, using its
    /// source's local stats.
    fn score_row(&self, key: &KeyValue, text: &str, terms: &[String]) -> Result<f64> {
        let stats = match locate_source(self.snap, key)? {
            Some(SourceId::Segment(id)) => {
                let segment = self
                    .snap
                    .state
                    .segments
                    .iter()
                    .find(|s| s.id == id)
                    .cloned()
                    .ok_or_else(|| Error::UnknownTable(format!("segment {id} vanished")))?;
                self.segment_stats(&segment)?
            }
            Some(SourceId::Memtable) | None => self.overlay_stats(),
        };
        let (n, df) = (&stats.0, &stats.1);
        let tokens = tokenize(text);
        let mut score = 0.0;
        for term in terms {
            let tf = tokens.iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = df.get(term).copied().unwrap_or(1).max(1) as u64;
            score += tf * idf((*n).max(1), df);
        }
        Ok(score_to_distance(score))
    }
}

enum SourceId {
    Memtable,
    Segment(u64),
}

/// Which source holds the newest visible version of `key`.
fn locate_source(snap: &Snapshot, key: &KeyValue) -> Result<Option<SourceId>> {
    let mut best: Option<(u64, SourceId)> = None;
    if let Some(row) = snap.state.memtable.get(key, snap.seqno) {
        best = Some((row.seqno, SourceId::Memtable));
    }
    for frozen in &snap.state.frozen {
        if let Some(row) = frozen.memtable.get(key, snap.seqno) {
            if best.as_ref().map(|(s, _)| row.seqno > *s).unwrap_or(true) {
                best = Some((row.seqno, SourceId::Memtable));
            }
        }
    }
    for segment in &snap.state.segments {
        if segment.min_seqno > snap.seqno {
            continue;
        }
        if let Some(row) = segment.get(key, snap.seqno, &snap.cache)? {
            if best.as_ref().map(|(s, _)| row.seqno > *s).unwrap_or(true) {
                best = Some((row.seqno, SourceId::Segment(segment.id)));
            }
        }
    }
    Ok(best.map(|(_, src)| src))
}

fn resolve_n_probe(snap: &Snapshot, column: &str, requested: Option<usize>) -> usize {
    if let Some(n) = requested {
        return n.max(1);
    }
    match snap.schema.index_for_column(column).map(|s| s.kind) {
        Some(IndexKind::Ivf { n_centroids }) => crate::vector::default_n_probe(n_centroids),
        _ => 1,
    }
}

/// Build the merged (segments + memtable overlay) sorted-distance source for
/// one rank term, with snapshot visibility enforced at the merge.
fn rank_source<'a>(
    snap: &'a Snapshot,
    term: &RankTerm,
    n_probe: Option<usize>,
) -> Result<Box<dyn SortedDistanceIterator + 'a>> {
    let col_idx = snap
        .schema
        .column_index(&term.column)
        .ok_or_else(|| Error::UnknownColumn(term.column.clone()))?;
    let mut sources: Vec<Box<dyn SortedDistanceIterator + 'a>> = Vec::new();
    for segment in &snap.state.segments {
        let Some(root) = segment.index_regions.get(&term.column) else {
            continue;
        };
        match (&term.query, term.modality) {
            (RankQueryValue::Vector(q), Modality::Vector) => {
                sources.push(Box::new(crate::vector::SegmentVectorIter::new(
                    segment.clone(),
                    *root,
                    q.clone(),
                    resolve_n_probe(snap, &term.column, n_probe),
                    snap.cache.clone(),
                )));
            }
            (RankQueryValue::Point([x, y]), Modality::Spatial) => {
                sources.push(Box::new(crate::spatial::SegmentSpatialIter::new(
                    segment.clone(),
                    *root,
                    (*x, *y),
                    snap.cache.clone(),
                )));
            }
            (RankQueryValue::Terms(text), Modality::Text) => {
                sources.push(Box::new(crate::text::SegmentTextIter::new(
                    segment.clone(),
                    *root,
                    tokenize(text),
                    snap.cache.clone(),
                )));
            }
            _ => return Err(Error::InvalidQuery("rank term query/modality mismatch".into())),
        }
    }

    // memtable overlay source
    let mut overlay_items: Vec<ScoredItem> = Vec::new();
    match (&term.query, term.modality) {
        (RankQueryValue::Vector(q), Modality::Vector) => {
            for row in snap.memtable_overlay() {
                if let Some(v) = row.values.get(col_idx).and_then(|v| v.as_vector()) {
                    if v.len() == q.len() {
                        overlay_items.push(ScoredItem {
                            key: row.key.clone(),
                            seqno: row.seqno,
                            distance: l2(v, q),
                            location: RowLocation::Memtable,
                        });
                    }
                }
            }
        }
        (RankQueryValue::Point([x, y]), Modality::Spatial) => {
            for row in snap.memtable_overlay() {
                if let Some((px, py)) = row.values.get(col_idx).and_then(|v| v.as_point()) {
                    overlay_items.push(ScoredItem {
                        key: row.key.clone(),
                        seqno: row.seqno,
                        distance: euclid(px, py, *x, *y),
                        location: RowLocation::Memtable,
                    });
                }
            }
        }
        (RankQueryValue::Terms(text), Modality::Text) => {
            let terms = tokenize(text);
            let docs: Vec<(KeyValue, u64, String)> = snap
                .memtable_overlay()
                .into_iter()
                .filter_map(|row| {
                    row.values
                        .get(col_idx)
                        .and_then(|v| v.as_text())
                        .map(|t| (row.key.clone(), row.seqno, t.to_string()))
                })
                .collect();
            let borrowed: Vec<(KeyValue, &str)> =
                docs.iter().map(|(k, _, t)| (k.clone(), t.as_str())).collect();
            let seqnos: HashMap<KeyValue, u64> =
                docs.iter().map(|(k, s, _)| (k.clone(), *s)).collect();
            for (key, distance) in crate::text::score_corpus(&borrowed, &terms) {
                overlay_items.push(ScoredItem {
                    seqno: seqnos[&key],
                    key,
                    distance,
                    location: RowLocation::Memtable,
                });
            }
        }
        _ => unreachable!("validated above"),
    }
    if !overlay_items.is_empty() {
        sources.push(Box::new(VecDistanceIterator::new(overlay_items)));
    }

    let vis: Box<crate::index::VisingFn<'a>> =
        Box::new(move |key: &KeyValue, seqno: u64| snap.is_visible(key, seqno));
    Ok(Box::new(MergedDistanceIterator::new(sources, Some(vis))?))
}

fn rank_distance_of_row(
    snap: &Snapshot,
    scorers: &HashMap<String, TextScorer<'_>>,
    row: &Row,
    term: &RankTerm,
) -> Result<Option<f64>> {
    let Some(value) = snap.column_value(row, &term.column) else {
        return Ok(None);
    };
    if value.is_null() {
        return Ok(None);
    }
    Ok(match (&term.query, term.modality) {
        (RankQueryValue::Vector(q), Modality::Vector) => value
            .as_vector()
            .filter(|v| v.len() == q.len())
            .map(|v| l2(v, q)),
        (RankQueryValue::Point([x, y]), Modality::Spatial) => {
            value.as_point().map(|(px, py)| euclid(px, py, *x, *y))
        }
        (RankQueryValue::Terms(text), Modality::Text) => match value.as_text() {
            Some(doc) => Some(scorers[&term.column].score_row(
                &row.key,
                doc,
                &tokenize(text),
            )?),
            None => None,
        },
        _ => None,
    })
}

fn project(snap: &Snapshot, row: &Row, select: &[String]) -> Vec<(String, AttributeValue)> {
    let names: Vec<&str> = if select.is_empty() {
        snap.schema.columns.iter().map(|c| c.name.as_str()).collect()
    } else {
        select.iter().map(|s| s.as_str()).collect()
    };
    names
        .into_iter()
        .map(|name| {
            let value = snap
                .column_value(row, name)
                .cloned()
                .unwrap_or(AttributeValue::Null);
            (name.to_string(), value)
        })
        .collect()
}

fn assemble_filter_results(snap: &Snapshot, spec: &QuerySpec, rows: Vec<Row>) -> Vec<ResultRow> {
    rows.into_iter()
        .map(|row| {
            let mut distances = Vec::new();
            for pred in &spec.filters {
                if let Predicate::VectorThreshold { column, query, .. } = pred {
                    if let Some(v) = snap.column_value(&row, column).and_then(|v| v.as_vector()) {
                        if v.len() == query.len() {
                            distances.push((column.clone(), l2(v, query)));
                        }
                    }
                }
            }
            ResultRow {
                columns: project(snap, &row, &spec.select),
                distances,
                score: None,
                key: row.key,
            }
        })
        .collect()
}

fn run_rank_plan(
    snap: &Snapshot,
    spec: &QuerySpec,
    pre_filter: Option<&PlanNode>,
    mode: NraMode,
) -> Result<(Vec<ResultRow>, NraReport)> {
    let rank = spec.rank.as_ref().expect("rank plan without rank spec");
    let mask: Option<HashSet<KeyValue>> = match pre_filter {
        Some(plan) => Some(
            run_filter_plan(snap, spec, plan)?
                .into_iter()
                .map(|r| r.key)
                .collect(),
        ),
        None => None,
    };

    let mut scorers: HashMap<String, TextScorer<'_>> = HashMap::new();
    for term in &rank.terms {
        if term.modality == Modality::Text {
            scorers
                .entry(term.column.clone())
                .or_insert_with(|| TextScorer::new(snap, &term.column));
        }
    }

    let mut iterators = Vec::with_capacity(rank.terms.len());
    for term in &rank.terms {
        iterators.push(rank_source(snap, term, spec.options.n_probe)?);
    }
    let weights: Vec<f64> = rank.terms.iter().map(|t| t.weight).collect();

    let scorers_ref = &scorers;
    let accessor = Box::new(move |key: &KeyValue, j: usize| -> Result<Option<f64>> {
        let term = &rank.terms[j];
        let Some(row) = snap.get(key)? else {
            return Ok(None);
        };
        rank_distance_of_row(snap, scorers_ref, &row, term)
    });

    let outcome = nra_topk(iterators, &weights, rank.k, mask.as_ref(), mode, accessor)?;

    let mut results = Vec::with_capacity(outcome.items.len());
    for item in outcome.items {
        let Some(row) = snap.get(&item.key)? else {
            continue;
        };
        let distances = rank
            .terms
            .iter()
            .zip(&item.distances)
            .map(|(t, d)| (t.column.clone(), *d))
            .collect();
        results.push(ResultRow {
            columns: project(snap, &row, &spec.select),
            distances,
            score: Some(item.score),
            key: item.key,
        });
    }
    Ok((results, outcome.report))
}

fn run_scan_sort(snap: &Snapshot, spec: &QuerySpec) -> Result<Vec<ResultRow>> {
    let rank = spec.rank.as_ref().expect("rank plan without rank spec");
    let all: Vec<usize> = (0..spec.filters.len()).collect();
    let rows = run_filter_plan(snap, spec, &PlanNode::FullScan { residuals: all })?;

    let mut scorers: HashMap<String, TextScorer<'_>> = HashMap::new();
    for term in &rank.terms {
        if term.modality == Modality::Text {
            scorers
                .entry(term.column.clone())
                .or_insert_with(|| TextScorer::new(snap, &term.column));
        }
    }

    let mut scored: Vec<(f64, Vec<f64>, Row)> = Vec::new();
    'rows: for row in rows {
        let mut dists = Vec::with_capacity(rank.terms.len());
        for term in &rank.terms {
            match rank_distance_of_row(snap, &scorers, &row, term)? {
                Some(d) => dists.push(d),
                None => continue 'rows, // rows missing a ranked attribute are not rankable
            }
        }
        let score = dists.iter().zip(&rank.terms).map(|(d, t)| d * t.weight).sum();
        scored.push((score, dists, row));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.2.key.cmp(&b.2.key)));
    scored.truncate(rank.k);

    Ok(scored
        .into_iter()
        .map(|(score, dists, row)| ResultRow {
            columns: project(snap, &row, &spec.select),
            distances: rank
                .terms
                .iter()
                .zip(dists)
                .map(|(t, d)| (t.column.clone(), d))
                .collect(),
            score: Some(score),
            key: row.key,
        })
        .collect())
}

pub fn run_plan(
    snap: &Snapshot,
    spec: &QuerySpec,
    costed: &CostedPlan,
) -> Result<(Vec<ResultRow>, ExecutionReport)> {
    let reads_before = snap.cache.metrics.physical_reads();
    let wrap = |e: Error| Error::PlanExecution {
        plan: costed.plan.describe(spec),
        source: Box::new(e),
    };
    let (rows, consumed) = match &costed.plan {
        PlanNode::NraTopK { pre_filter } => {
            let (rows, report) =
                run_rank_plan(snap, spec, pre_filter.as_deref(), spec.options.nra_mode)
                    .map_err(wrap)?;
            (rows, Some(report.consumed))
        }
        PlanNode::ScanSort => (run_scan_sort(snap, spec).map_err(wrap)?, None),
        filter_plan => {
            let rows = run_filter_plan(snap, spec, filter_plan).map_err(wrap)?;
            (assemble_filter_results(snap, spec, rows), None)
        }
    };
    let report = ExecutionReport {
        plan: costed.plan.describe(spec),
        estimated_cost: costed.estimated_cost,
        estimated_rows: costed.estimated_rows,
        actual_rows: rows.len() as u64,
        block_reads: snap.cache.metrics.physical_reads() - reads_before,
        consumed_entries: consumed,
        used_view: None,
        exact: true,
    };
    Ok((rows, report))
}

/// Plan, choose, and execute against an existing snapshot.
pub fn execute_at(snap: &Snapshot, spec: &QuerySpec) -> Result<(Vec<ResultRow>, ExecutionReport)> {
    spec.validate(&snap.schema)?;
    let ctx = PlanContext::new(&snap.schema, snap, spec.options.n_probe);
    let plans = enumerate_plans(spec, &ctx);
    let chosen = match &spec.options.force_plan {
        Some(directive) => find_forced(&plans, spec, directive).ok_or_else(|| {
            Error::InvalidQuery(format!("force_plan `{directive}` matches no enumerated plan"))
        })?,
        None => &plans[choose_plan(&plans)],
    };
    run_plan(snap, spec, chosen)
}

/// Plan, choose, and execute under a fresh snapshot of the table.
pub fn execute(table: &Arc<Table>, spec: &QuerySpec) -> Result<(Vec<ResultRow>, ExecutionReport)> {
    let snap = table.snapshot();
    execute_at(&snap, spec)
}

/// All enumerated plans with costs, for explain output and plan-equality
/// testing.
pub fn plans_for(snap: &Snapshot, spec: &QuerySpec) -> Result<Vec<CostedPlan>> {
    spec.validate(&snap.schema)?;
    let ctx = PlanContext::new(&snap.schema, snap, spec.options.n_probe);
    Ok(enumerate_plans(spec, &ctx))
}

/// Re-cost a single plan (used when executing a forced plan built by hand).
pub fn cost_single(snap: &Snapshot, spec: &QuerySpec, plan: &PlanNode) -> CostedPlan {
    let ctx = PlanContext::new(&snap.schema, snap, spec.options.n_probe);
    cost_plan(plan, spec, &ctx)
}

/// Multi-line explain text: chosen plan, estimates, and actuals.
pub fn render_explain(report: &ExecutionReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("plan: {}\n", report.plan));
    out.push_str(&format!(
        "estimated: cost={:.3} rows={:.1}\n",
        report.estimated_cost, report.estimated_rows
    ));
    out.push_str(&format!(
        "actual: rows={} block_reads={}",
        report.actual_rows, report.block_reads
    ));
    if let Some(consumed) = report.consumed_entries {
        out.push_str(&format!(" nra_consumed={consumed}"));
    }
    if let Some(view) = report.used_view {
        out.push_str(&format!(" used_view={view}"));
    }
    out.push('\n');
    out
}
