//! Lloyd's k-means with k-means++ seeding. Deterministic under a fixed seed;
//! the effective centroid count clamps to the number of distinct inputs.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub const MAX_ITERATIONS: usize = 20;
pub const MIN_RELATIVE_IMPROVEMENT: f64 = 1e-4;

/// Training runs on at most this many vectors; assignment stays exact over
/// the full input.
pub const MAX_TRAINING_SAMPLE: usize = 10_000;

pub fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0f32;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

pub fn l2(a: &[f32], b: &[f32]) -> f64 {
    (squared_l2(a, b) as f64).sqrt()
}

/// Index of the nearest centroid (ties break to the lowest index).
pub fn nearest_centroid(centroids: &[Vec<f32>], v: &[f32]) -> usize {
    let mut best = 0usize;
    let mut best_d = f32::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_l2(c, v);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Train centroids over `vectors`. The result length is
/// `min(n_centroids, distinct vector count)`; with a single centroid the
/// result is the component-wise mean.
pub fn train_centroids(vectors: &[&[f32]], n_centroids: usize, seed: u64) -> Vec<Vec<f32>> {
    if vectors.is_empty() || n_centroids == 0 {
        return Vec::new();
    }
    let dim = vectors[0].len();
    let mut distinct: Vec<&[f32]> = Vec::new();
    {
        let mut seen = std::collections::HashSet::new();
        for v in vectors {
            let bits: Vec<u32> = v.iter().map(|f| f.to_bits()).collect();
            if seen.insert(bits) {
                distinct.push(v);
            }
        }
    }
    let k = n_centroids.min(distinct.len());
    if k == 1 {
        let mut mean = vec![0f64; dim];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v.iter()) {
                *m += *x as f64;
            }
        }
        let n = vectors.len() as f64;
        return vec![mean.into_iter().map(|m| (m / n) as f32).collect()];
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample: Vec<&[f32]> = if vectors.len() > MAX_TRAINING_SAMPLE {
        let mut sample = vectors.to_vec();
        sample.shuffle(&mut rng);
        sample.truncate(MAX_TRAINING_SAMPLE);
        sample
    } else {
        vectors.to_vec()
    };

    let mut centroids = plus_plus_seed(&sample, k, &mut rng);
    let mut prev_inertia = f64::INFINITY;
    let mut assignment = vec![0usize; sample.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut inertia = 0f64;
        for (i, v) in sample.iter().enumerate() {
            let c = nearest_centroid(&centroids, v);
            assignment[i] = c;
            inertia += squared_l2(&centroids[c], v) as f64;
        }
        let mut sums = vec![vec![0f64; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (i, v) in sample.iter().enumerate() {
            let c = assignment[i];
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(v.iter()) {
                *s += *x as f64;
            }
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            if counts[c] == 0 {
                // empty cell: restart it at the point farthest from its centroid
                let far = sample
                    .iter()
                    .max_by(|a, b| {
                        squared_l2(centroid, a)
                            .partial_cmp(&squared_l2(centroid, b))
                            .unwrap()
                    })
                    .unwrap();
                *centroid = far.to_vec();
                continue;
            }
            for (dst, s) in centroid.iter_mut().zip(&sums[c]) {
                *dst = (*s / counts[c] as f64) as f32;
            }
        }
        if prev_inertia.is_finite() {
            let improvement = (prev_inertia - inertia) / prev_inertia.max(f64::MIN_POSITIVE);
            if (0.0..MIN_RELATIVE_IMPROVEMENT).contains(&improvement) {
                break;
            }
        }
        prev_inertia = inertia;
    }
    centroids
}

fn plus_plus_seed(sample: &[&[f32]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f32>> {
    let mut centroids: Vec<Vec<f32>> = Vec::with_capacity(k);
    let first = rng.random_range(0..sample.len());
    centroids.push(sample[first].to_vec());
    let mut dists: Vec<f64> = sample
        .iter()
        .map(|v| squared_l2(&centroids[0], v) as f64)
        .collect();
    while centroids.len() < k {
        let total: f64 = dists.iter().sum();
        let next = if total <= 0.0 {
            // all remaining points coincide with a centroid; pick any unused
            match sample.iter().position(|v| {
                centroids
                    .iter()
                    .all(|c| squared_l2(c, v) > 0.0)
            }) {
                Some(i) => i,
                None => break,
            }
        } else {
            let weighted = WeightedIndex::new(&dists).expect("positive weights");
            weighted.sample(rng)
        };
        centroids.push(sample[next].to_vec());
        let newest = centroids.last().unwrap();
        for (d, v) in dists.iter_mut().zip(sample.iter()) {
            *d = d.min(squared_l2(newest, v) as f64);
        }
    }
    centroids
}
