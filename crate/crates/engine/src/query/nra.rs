//! NRA-style top-k aggregation over sorted distance iterators.
//!
//! Objects are drawn round-robin (one per iterator per round). For each seen
//! object the optimistic bound LB uses the iterator thresholds τ_j for its
//! missing terms (unseen distances cannot be below τ_j on a sorted source);
//! the pessimistic bound UB is the exact score once every term is known and
//! +∞ before that. The search stops once the k best exactly-scored objects
//! cannot be displaced by any seen candidate's LB nor by the virtual unseen
//! object's bound Σ λ_j·τ_j.
//!
//! Refine mode (default) completes missing terms by key lookup, so the
//! returned top-k is exact over the iterators' candidate universe with
//! deterministic (score, key) tie-breaking. Faithful mode reproduces the
//! bound bookkeeping where LB counts only seen terms and UB adds τ_j for
//! missing ones, returning the k-pool sorted by LB without random access;
//! it exists for fidelity experiments and may misrank partially seen
//! objects.
//!
//! When an iterator exhausts, its τ becomes +∞ for never-seen objects, and
//! objects missing from that source contribute d_max_j (τ at exhaustion)
//! unless refinement recovers their true distance.

use std::collections::{HashMap, HashSet};

use crate::error::Result;
use crate::index::SortedDistanceIterator;
use crate::query::spec::NraMode;
use crate::value::KeyValue;

/// Random-access completion: exact distance of `key` on rank term `j`, or
/// `None` when the attribute is missing (the object is then dropped).
pub type Accessor<'a> = dyn FnMut(&KeyValue, usize) -> Result<Option<f64>> + 'a;

pub struct NraItem {
    pub key: KeyValue,
    pub score: f64,
    pub distances: Vec<f64>,
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NraReport {
    /// Sorted accesses drawn across all iterators.
    pub consumed: u64,
    pub rounds: u64,
    /// Random-access completions performed (refine mode).
    pub refined: u64,
}

struct Candidate {
    dists: Vec<Option<f64>>,
}

struct State<'a> {
    weights: Vec<f64>,
    k: usize,
    tau: Vec<f64>,
    exhausted: Vec<bool>,
    seen: HashMap<KeyValue, Candidate>,
    refined: HashMap<KeyValue, (f64, Vec<f64>)>,
    /// max-heap over the k smallest refined scores, kept incrementally
    best_k: std::collections::BinaryHeap<OrderedScore>,
    dropped: HashSet<KeyValue>,
    accessor: Box<Accessor<'a>>,
    report: NraReport,
}

#[derive(PartialEq)]
struct OrderedScore(f64);
impl Eq for OrderedScore {}
impl PartialOrd for OrderedScore {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrderedScore {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl State<'_> {
    fn lb(&self, cand: &Candidate) -> f64 {
        let mut lb = 0.0;
        for (j, d) in cand.dists.iter().enumerate() {
            lb += self.weights[j] * d.unwrap_or(self.tau[j]);
        }
        lb
    }

    /// Threshold for the virtual unseen object: Σ λ_j · τ_j.
    fn unseen_bound(&self) -> f64 {
        self.weights.iter().zip(&self.tau).map(|(w, t)| w * t).sum()
    }

    fn refine(&mut self, key: &KeyValue) -> Result<()> {
        if self.refined.contains_key(key) || self.dropped.contains(key) {
            return Ok(());
        }
        let cand = self.seen.get(key).expect("refining a seen candidate");
        let mut dists = Vec::with_capacity(cand.dists.len());
        for (j, d) in cand.dists.iter().enumerate() {
            match d {
                Some(d) => dists.push(*d),
                None => match (self.accessor)(key, j)? {
                    Some(d) => {
                        self.report.refined += 1;
                        dists.push(d);
                    }
                    None => {
                        self.dropped.insert(key.clone());
                        return Ok(());
                    }
                },
            }
        }
        let score: f64 = dists.iter().zip(&self.weights).map(|(d, w)| d * w).sum();
        self.refined.insert(key.clone(), (score, dists));
        self.best_k.push(OrderedScore(score));
        if self.best_k.len() > self.k {
            self.best_k.pop();
        }
        Ok(())
    }

    /// k-th smallest refined score, once k candidates are refined.
    fn kth_refined(&self) -> Option<f64> {
        if self.refined.len() < self.k {
            return None;
        }
        self.best_k.peek().map(|s| s.0)
    }

    fn result(&self) -> Vec<NraItem> {
        let mut items: Vec<NraItem> = self
            .refined
            .iter()
            .map(|(key, (score, dists))| NraItem {
                key: key.clone(),
                score: *score,
                distances: dists.clone(),
            })
            .collect();
        items.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.key.cmp(&b.key)));
        items.truncate(self.k);
        items
    }
}

pub struct NraOutcome {
    pub items: Vec<NraItem>,
    pub report: NraReport,
}

#[allow(clippy::too_many_arguments)]
pub fn nra_topk<'a>(
    mut iterators: Vec<Box<dyn SortedDistanceIterator + 'a>>,
    weights: &[f64],
    k: usize,
    mask: Option<&HashSet<KeyValue>>,
    mode: NraMode,
    accessor: Box<Accessor<'a>>,
) -> Result<NraOutcome> {
    assert_eq!(iterators.len(), weights.len());
    assert!(k >= 1);
    let n_terms = iterators.len();
    if mode == NraMode::Faithful {
        return faithful_topk(iterators, weights, k, mask);
    }
    let mut state = State {
        weights: weights.to_vec(),
        k,
        tau: vec![0.0; n_terms],
        exhausted: vec![false; n_terms],
        seen: HashMap::new(),
        refined: HashMap::new(),
        best_k: std::collections::BinaryHeap::new(),
        dropped: HashSet::new(),
        accessor,
        report: NraReport::default(),
    };

    loop {
        let mut drew_any = false;
        for j in 0..n_terms {
            if state.exhausted[j] {
                continue;
            }
            match iterators[j].next_item()? {
                Some(item) => {
                    state.report.consumed += 1;
                    drew_any = true;
                    state.tau[j] = state.tau[j].max(item.distance);
                    if mask.map(|m| !m.contains(&item.key)).unwrap_or(false) {
                        continue; // pre-filtered out before bound updates
                    }
                    if state.dropped.contains(&item.key) {
                        continue;
                    }
                    let cand = state.seen.entry(item.key.clone()).or_insert_with(|| Candidate {
                        dists: vec![None; n_terms],
                    });
                    cand.dists[j] = Some(item.distance);
                    if let Some((_, dists)) = state.refined.get_mut(&item.key) {
                        // keep sorted-access ground truth if it arrives late
                        dists[j] = item.distance;
                    }
                }
                None => state.exhausted[j] = true,
            }
        }
        state.report.rounds += 1;
        let closed = !drew_any;

        // per-round stop check while the pool is small, then every 16 rounds
        let check = closed || state.seen.len() < 4096 || state.report.rounds.is_multiple_of(16);
        if !check {
            continue;
        }
        if state.seen.len() < k && !closed {
            continue;
        }

        // refine not-yet-refined candidates in ascending LB order until the
        // next LB strictly exceeds the k-th refined score (which tightens as
        // refinements land)
        let mut order: Vec<(f64, KeyValue)> = state
            .seen
            .iter()
            .filter(|(key, _)| !state.dropped.contains(*key) && !state.refined.contains_key(*key))
            .map(|(key, cand)| (state.lb(cand), key.clone()))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

        for (lb, key) in &order {
            let need_more = state.refined.len() < k;
            let within = state.kth_refined().map(|s_k| *lb <= s_k).unwrap_or(true);
            if !need_more && !within && !closed {
                break;
            }
            state.refine(key)?;
        }

        if closed {
            // universe is closed; the refined set is complete and exact
            let items = state.result();
            let report = state.report;
            return Ok(NraOutcome { items, report });
        }
        if let Some(s_k) = state.kth_refined() {
            // stop once every non-refined candidate's LB and the virtual
            // unseen object's bound both exceed the k-th refined score
            let min_unrefined_lb = state
                .seen
                .iter()
                .filter(|(key, _)| !state.dropped.contains(*key) && !state.refined.contains_key(*key))
                .map(|(_, cand)| state.lb(cand))
                .fold(f64::INFINITY, f64::min);
            if s_k < state.unseen_bound() && s_k < min_unrefined_lb {
                let items = state.result();
                let report = state.report;
                return Ok(NraOutcome { items, report });
            }
        }
    }
}

/// Bound bookkeeping port without random access: LB counts seen terms only,
/// UB adds τ_j (or d_max_j after exhaustion) for missing terms; returns the
/// k objects with the smallest UB, sorted by LB.
fn faithful_topk<'a>(
    mut iterators: Vec<Box<dyn SortedDistanceIterator + 'a>>,
    weights: &[f64],
    k: usize,
    mask: Option<&HashSet<KeyValue>>,
) -> Result<NraOutcome> {
    let n_terms = iterators.len();
    let mut tau = vec![0.0f64; n_terms];
    let mut exhausted = vec![false; n_terms];
    let mut seen: HashMap<KeyValue, Candidate> = HashMap::new();
    let mut report = NraReport::default();

    loop {
        let mut drew_any = false;
        for j in 0..n_terms {
            if exhausted[j] {
                continue;
            }
            match iterators[j].next_item()? {
                Some(item) => {
                    report.consumed += 1;
                    drew_any = true;
                    tau[j] = tau[j].max(item.distance);
                    if mask.map(|m| !m.contains(&item.key)).unwrap_or(false) {
                        continue;
                    }
                    seen.entry(item.key.clone())
                        .or_insert_with(|| Candidate {
                            dists: vec![None; n_terms],
                        })
                        .dists[j] = Some(item.distance);
                }
                None => exhausted[j] = true,
            }
        }
        report.rounds += 1;
        let closed = !drew_any;
        if seen.len() < k && !closed {
            continue;
        }

        let lb = |cand: &Candidate| -> f64 {
            cand.dists
                .iter()
                .enumerate()
                .map(|(j, d)| match d {
                    Some(d) => weights[j] * d,
                    None if exhausted[j] => weights[j] * tau[j],
                    None => 0.0,
                })
                .sum()
        };
        let ub = |cand: &Candidate| -> f64 {
            cand.dists
                .iter()
                .enumerate()
                .map(|(j, d)| weights[j] * d.unwrap_or(tau[j]))
                .sum()
        };

        let mut pool: Vec<(f64, f64, &KeyValue)> = seen
            .iter()
            .map(|(key, cand)| (ub(cand), lb(cand), key))
            .collect();
        pool.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.2.cmp(b.2)));
        let (top, rest) = pool.split_at(k.min(pool.len()));
        let max_pool_ub = top.last().map(|(ub, _, _)| *ub).unwrap_or(f64::INFINITY);
        let min_outside_lb = rest
            .iter()
            .map(|(_, lb, _)| *lb)
            .fold(f64::INFINITY, f64::min);
        let virtual_unseen: f64 = weights
            .iter()
            .zip(&tau)
            .zip(&exhausted)
            .map(|((w, t), ex)| if *ex { f64::INFINITY } else { w * t })
            .sum();
        let stop = closed || (top.len() >= k && max_pool_ub <= min_outside_lb.min(virtual_unseen));
        if stop {
            let mut items: Vec<NraItem> = top
                .iter()
                .map(|(_, lb, key)| NraItem {
                    key: (*key).clone(),
                    score: *lb,
                    distances: seen[*key]
                        .dists
                        .iter()
                        .enumerate()
                        .map(|(j, d)| d.unwrap_or(tau[j]))
                        .collect(),
                })
                .collect();
            items.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.key.cmp(&b.key)));
            return Ok(NraOutcome { items, report });
        }
    }
}
