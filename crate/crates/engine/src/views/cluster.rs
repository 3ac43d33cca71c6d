//! Clustering registered query shapes into view candidates: agglomerative
//! merging of spatial regions and greedy leader clustering of vector query
//! embeddings. Only queries sharing a table, column, and base filter
//! template cluster together.

use std::collections::HashMap;

use crate::query::spec::Predicate;
use crate::vector::l2;

#[derive(Debug, Clone)]
pub struct SpatialShape {
    pub query_id: u64,
    pub table: String,
    pub column: String,
    pub rect: [f64; 4],
    pub base_filters: Vec<Predicate>,
    /// expected direct cost × execution frequency
    pub weighted_cost: f64,
}

#[derive(Debug, Clone)]
pub struct VectorShape {
    pub query_id: u64,
    pub table: String,
    pub column: String,
    pub embedding: Vec<f32>,
    pub k: usize,
    pub base_filters: Vec<Predicate>,
    pub weighted_cost: f64,
}

#[derive(Debug, Clone)]
pub enum QueryCluster {
    Spatial {
        table: String,
        column: String,
        base_filters: Vec<Predicate>,
        members: Vec<u64>,
        union_rect: [f64; 4],
        benefit: f64,
    },
    Vector {
        table: String,
        column: String,
        base_filters: Vec<Predicate>,
        members: Vec<u64>,
        center: Vec<f32>,
        /// max member-to-center distance: the query-admission radius
        radius: f64,
        max_k: usize,
        benefit: f64,
    },
}

fn rect_area(r: &[f64; 4]) -> f64 {
    (r[2] - r[0]).max(0.0) * (r[3] - r[1]).max(0.0)
}

fn rect_union(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [a[0].min(b[0]), a[1].min(b[1]), a[2].max(b[2]), a[3].max(b[3])]
}

fn rect_center(r: &[f64; 4]) -> (f64, f64) {
    ((r[0] + r[2]) / 2.0, (r[1] + r[3]) / 2.0)
}

fn template_key(table: &str, column: &str, base: &[Predicate]) -> String {
    let mut descs: Vec<String> = base.iter().map(|p| format!("{p:?}")).collect();
    descs.sort();
    format!("{table}|{column}|{}", descs.join("&"))
}

/// Merge the closest pair of spatial clusters while the union rectangle's
/// area stays within 2× the sum of the pair's areas.
fn cluster_spatial_group(shapes: &[&SpatialShape]) -> Vec<QueryCluster> {
    struct Cluster {
        rect: [f64; 4],
        members: Vec<usize>,
    }
    let mut clusters: Vec<Cluster> = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| Cluster {
            rect: s.rect,
            members: vec![i],
        })
        .collect();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let union = rect_union(&clusters[i].rect, &clusters[j].rect);
                if rect_area(&union) > 2.0 * (rect_area(&clusters[i].rect) + rect_area(&clusters[j].rect)) {
                    continue;
                }
                let (cix, ciy) = rect_center(&clusters[i].rect);
                let (cjx, cjy) = rect_center(&clusters[j].rect);
                let d = ((cix - cjx).powi(2) + (ciy - cjy).powi(2)).sqrt();
                if best.map(|(_, _, bd)| d < bd).unwrap_or(true) {
                    best = Some((i, j, d));
                }
            }
        }
        let Some((i, j, _)) = best else { break };
        let victim = clusters.swap_remove(j);
        clusters[i].rect = rect_union(&clusters[i].rect, &victim.rect);
        clusters[i].members.extend(victim.members);
    }
    clusters
        .into_iter()
        .map(|c| {
            let first = shapes[c.members[0]];
            QueryCluster::Spatial {
                table: first.table.clone(),
                column: first.column.clone(),
                base_filters: first.base_filters.clone(),
                members: c.members.iter().map(|&i| shapes[i].query_id).collect(),
                union_rect: c.rect,
                benefit: c.members.iter().map(|&i| shapes[i].weighted_cost).sum(),
            }
        })
        .collect()
}

/// Greedy leader clustering of query embeddings under an L2 threshold of
/// half the mean pairwise distance of a bounded sample.
fn cluster_vector_group(shapes: &[&VectorShape]) -> Vec<QueryCluster> {
    let sample: Vec<&VectorShape> = shapes.iter().take(256).copied().collect();
    let mut pair_sum = 0.0;
    let mut pairs = 0u64;
    for i in 0..sample.len() {
        for j in i + 1..sample.len() {
            if sample[i].embedding.len() == sample[j].embedding.len() {
                pair_sum += l2(&sample[i].embedding, &sample[j].embedding);
                pairs += 1;
            }
        }
    }
    let epsilon = if pairs == 0 { 0.0 } else { 0.5 * pair_sum / pairs as f64 };

    let mut leaders: Vec<(Vec<f32>, Vec<usize>)> = Vec::new();
    for (idx, shape) in shapes.iter().enumerate() {
        let mut assigned = false;
        for (leader, members) in leaders.iter_mut() {
            if leader.len() == shape.embedding.len() && l2(leader, &shape.embedding) <= epsilon {
                members.push(idx);
                assigned = true;
                break;
            }
        }
        if !assigned {
            leaders.push((shape.embedding.clone(), vec![idx]));
        }
    }

    leaders
        .into_iter()
        .map(|(_, members)| {
            let first = shapes[members[0]];
            let dim = first.embedding.len();
            let mut center = vec![0f64; dim];
            for &m in &members {
                for (c, x) in center.iter_mut().zip(&shapes[m].embedding) {
                    *c += *x as f64;
                }
            }
            let center: Vec<f32> = center
                .iter()
                .map(|c| (*c / members.len() as f64) as f32)
                .collect();
            let radius = members
                .iter()
                .map(|&m| l2(&center, &shapes[m].embedding))
                .fold(0.0f64, f64::max);
            QueryCluster::Vector {
                table: first.table.clone(),
                column: first.column.clone(),
                base_filters: first.base_filters.clone(),
                members: members.iter().map(|&m| shapes[m].query_id).collect(),
                center,
                radius,
                max_k: members.iter().map(|&m| shapes[m].k).max().unwrap_or(1),
                benefit: members.iter().map(|&m| shapes[m].weighted_cost).sum(),
            }
        })
        .collect()
}

pub fn cluster_queries(spatial: &[SpatialShape], vector: &[VectorShape]) -> Vec<QueryCluster> {
    let mut out = Vec::new();
    let mut spatial_groups: HashMap<String, Vec<&SpatialShape>> = HashMap::new();
    for shape in spatial {
        spatial_groups
            .entry(template_key(&shape.table, &shape.column, &shape.base_filters))
            .or_default()
            .push(shape);
    }
    let mut keys: Vec<&String> = spatial_groups.keys().collect();
    keys.sort();
    for key in keys {
        out.extend(cluster_spatial_group(&spatial_groups[key]));
    }

    let mut vector_groups: HashMap<String, Vec<&VectorShape>> = HashMap::new();
    for shape in vector {
        vector_groups
            .entry(template_key(&shape.table, &shape.column, &shape.base_filters))
            .or_default()
            .push(shape);
    }
    let mut keys: Vec<&String> = vector_groups.keys().collect();
    keys.sort();
    for key in keys {
        out.extend(cluster_vector_group(&vector_groups[key]));
    }
    out
}
