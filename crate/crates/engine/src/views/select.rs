//! View selection under a storage budget: exact 0/1 knapsack by dynamic
//! programming on 64 KiB storage quanta for up to 64 candidates, greedy by
//! benefit density beyond that. Selected storage never exceeds the budget.

use crate::views::cluster::QueryCluster;

pub const STORAGE_QUANTUM: u64 = 64 * 1024;
pub const DP_CANDIDATE_LIMIT: usize = 64;

#[derive(Debug, Clone)]
pub struct Candidate {
    pub cluster: QueryCluster,
    pub benefit: f64,
    pub storage_estimate: u64,
}

fn quantize(bytes: u64) -> u64 {
    bytes.div_ceil(STORAGE_QUANTUM).max(1)
}

/// Returns indices of the selected candidates.
pub fn select_views(candidates: &[Candidate], budget_bytes: u64) -> Vec<usize> {
    let capacity = (budget_bytes / STORAGE_QUANTUM) as usize;
    if capacity == 0 || candidates.is_empty() {
        return Vec::new();
    }
    if candidates.len() <= DP_CANDIDATE_LIMIT {
        knapsack_dp(candidates, capacity)
    } else {
        greedy(candidates, capacity)
    }
}

fn knapsack_dp(candidates: &[Candidate], capacity: usize) -> Vec<usize> {
    let n = candidates.len();
    let weights: Vec<usize> = candidates.iter().map(|c| quantize(c.storage_estimate) as usize).collect();
    // full table so the traceback is unambiguous
    let mut table = vec![vec![0.0f64; capacity + 1]; n + 1];
    for i in 1..=n {
        let w_i = weights[i - 1];
        for w in 0..=capacity {
            table[i][w] = table[i - 1][w];
            if w >= w_i {
                let with = table[i - 1][w - w_i] + candidates[i - 1].benefit;
                if with > table[i][w] {
                    table[i][w] = with;
                }
            }
        }
    }
    let mut picks = Vec::new();
    let mut w = capacity;
    for i in (1..=n).rev() {
        if table[i][w] != table[i - 1][w] {
            picks.push(i - 1);
            w -= weights[i - 1];
        }
    }
    picks.sort_unstable();
    picks
}

fn greedy(candidates: &[Candidate], capacity: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let da = candidates[a].benefit / quantize(candidates[a].storage_estimate) as f64;
        let db = candidates[b].benefit / quantize(candidates[b].storage_estimate) as f64;
        db.total_cmp(&da).then(a.cmp(&b))
    });
    let mut used = 0usize;
    let mut picks = Vec::new();
    for i in order {
        let w = quantize(candidates[i].storage_estimate) as usize;
        if used + w <= capacity {
            used += w;
            picks.push(i);
        }
    }
    picks.sort_unstable();
    picks
}
