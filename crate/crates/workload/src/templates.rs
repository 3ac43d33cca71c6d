//! The 11 parameterized hybrid query templates: six hybrid-search shapes
//! over {vector θ, region, keyword, time range} and five hybrid-NN shapes
//! (vector-only; vector+spatial; vector+spatial+text; time pre-filtered;
//! region pre-filtered). Parameters sample deterministically under a seed.

use arcdb::query::{
    Modality, Predicate, QueryOptions, QuerySpec, RankQueryValue, RankSpec, RankTerm, ScalarBound,
};
use arcdb::value::GeometryValue;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::config::TemplateMix;
use crate::datagen::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateKind {
    HybridSearch,
    HybridNn,
}

pub const TEMPLATE_IDS: [u8; 11] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

pub fn template_kind(id: u8) -> TemplateKind {
    if id <= 6 {
        TemplateKind::HybridSearch
    } else {
        TemplateKind::HybridNn
    }
}

pub fn templates_for(mix: TemplateMix) -> Vec<u8> {
    match mix {
        TemplateMix::SearchOnly => (1..=6).collect(),
        TemplateMix::NnOnly => (7..=11).collect(),
        TemplateMix::Mixed => TEMPLATE_IDS.to_vec(),
    }
}

fn sample_region(dataset: &Dataset, rng: &mut ChaCha8Rng) -> GeometryValue {
    // half the time a city region, half a window around a hotspot
    if !dataset.city_rects.is_empty() && rng.random_bool(0.5) {
        GeometryValue::Rect(dataset.city_rects[rng.random_range(0..dataset.city_rects.len())])
    } else {
        let (hx, hy) = dataset.spatial_hotspots[rng.random_range(0..dataset.spatial_hotspots.len())];
        let w = rng.random_range(2.0..15.0);
        let h = rng.random_range(2.0..10.0);
        GeometryValue::rect(
            (hx - w).max(-180.0),
            (hy - h).max(-90.0),
            (hx + w).min(180.0),
            (hy + h).min(90.0),
        )
    }
}

fn sample_keyword(dataset: &Dataset, rng: &mut ChaCha8Rng) -> String {
    // bias towards frequent vocabulary so matches exist
    let rank = (rng.random::<f64>().powi(2) * dataset.vocab.len() as f64) as usize;
    dataset.vocab[rank.min(dataset.vocab.len() - 1)].clone()
}

fn sample_vector(dataset: &Dataset, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let center = &dataset.cluster_centers[rng.random_range(0..dataset.cluster_centers.len())];
    center.iter().map(|c| c + (rng.random::<f32>() - 0.5) * 0.4).collect()
}

fn sample_theta(dataset: &Dataset, rng: &mut ChaCha8Rng) -> f64 {
    // around the intra-cluster noise scale so the filter is meaningful
    let base = (0.09f64 * dataset.config.dim as f64).sqrt();
    base * rng.random_range(0.8..2.0)
}

fn sample_time_range(dataset: &Dataset, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let n = dataset.config.tweets as f64;
    let lo = rng.random_range(0.0..n * 0.8);
    (lo, lo + rng.random_range(n * 0.05..n * 0.3))
}

fn sample_point(dataset: &Dataset, rng: &mut ChaCha8Rng) -> [f64; 2] {
    let (hx, hy) = dataset.spatial_hotspots[rng.random_range(0..dataset.spatial_hotspots.len())];
    [hx + rng.random_range(-3.0..3.0), hy + rng.random_range(-3.0..3.0)]
}

fn sample_k(rng: &mut ChaCha8Rng) -> usize {
    [5usize, 10, 20][rng.random_range(0..3)]
}

/// Instantiate template `id` with parameters drawn from `rng`.
pub fn instantiate(dataset: &Dataset, id: u8, rng: &mut ChaCha8Rng) -> QuerySpec {
    let time_pred = |rng: &mut ChaCha8Rng| {
        let (lo, hi) = sample_time_range(dataset, rng);
        Predicate::ScalarRange {
            column: "time".into(),
            lo: ScalarBound::Num(lo),
            hi: ScalarBound::Num(hi),
        }
    };
    let region_pred = |rng: &mut ChaCha8Rng| Predicate::SpatialContains {
        column: "coordinate".into(),
        region: sample_region(dataset, rng),
    };
    let keyword_pred = |rng: &mut ChaCha8Rng| Predicate::Keyword {
        column: "content".into(),
        term: sample_keyword(dataset, rng),
    };
    let vector_pred = |rng: &mut ChaCha8Rng| Predicate::VectorThreshold {
        column: "embedding".into(),
        query: sample_vector(dataset, rng),
        threshold: sample_theta(dataset, rng),
    };
    let vector_term = |rng: &mut ChaCha8Rng, weight: f64| RankTerm {
        modality: Modality::Vector,
        column: "embedding".into(),
        query: RankQueryValue::Vector(sample_vector(dataset, rng)),
        weight,
    };
    let spatial_term = |rng: &mut ChaCha8Rng, weight: f64| RankTerm {
        modality: Modality::Spatial,
        column: "coordinate".into(),
        query: RankQueryValue::Point(sample_point(dataset, rng)),
        weight,
    };
    let text_term = |rng: &mut ChaCha8Rng, weight: f64| RankTerm {
        modality: Modality::Text,
        column: "content".into(),
        query: RankQueryValue::Terms(format!(
            "{} {}",
            sample_keyword(dataset, rng),
            sample_keyword(dataset, rng)
        )),
        weight,
    };

    let (filters, rank) = match id {
        1 => (vec![keyword_pred(rng)], None),
        2 => (vec![region_pred(rng)], None),
        3 => (vec![keyword_pred(rng), region_pred(rng)], None),
        4 => (vec![vector_pred(rng), time_pred(rng)], None),
        5 => (vec![vector_pred(rng), keyword_pred(rng), region_pred(rng)], None),
        6 => (vec![time_pred(rng), region_pred(rng)], None),
        7 => (
            vec![],
            Some(RankSpec {
                terms: vec![vector_term(rng, 1.0)],
                k: sample_k(rng),
            }),
        ),
        8 => {
            let (wv, ws) = (rng.random_range(0.5..2.0), rng.random_range(0.01..0.1));
            (
                vec![],
                Some(RankSpec {
                    terms: vec![vector_term(rng, wv), spatial_term(rng, ws)],
                    k: sample_k(rng),
                }),
            )
        }
        9 => {
            let (wv, ws, wt) = (
                rng.random_range(0.5..2.0),
                rng.random_range(0.01..0.1),
                rng.random_range(0.1..1.0),
            );
            (
                vec![],
                Some(RankSpec {
                    terms: vec![vector_term(rng, wv), spatial_term(rng, ws), text_term(rng, wt)],
                    k: sample_k(rng),
                }),
            )
        }
        10 => (
            vec![time_pred(rng)],
            Some(RankSpec {
                terms: vec![vector_term(rng, 1.0)],
                k: sample_k(rng),
            }),
        ),
        11 => {
            let (wv, ws) = (rng.random_range(0.5..2.0), rng.random_range(0.01..0.1));
            (
                vec![region_pred(rng)],
                Some(RankSpec {
                    terms: vec![vector_term(rng, wv), spatial_term(rng, ws)],
                    k: sample_k(rng),
                }),
            )
        }
        other => panic!("unknown template id {other}"),
    };
    QuerySpec {
        table: "tweets".into(),
        select: vec!["id".into(), "content".into()],
        filters,
        rank,
        mode: Default::default(),
        options: QueryOptions::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::WorkloadConfig;
    use crate::datagen::generate_dataset;
    use arcdb::storage::{Database, DatabaseOptions};

    #[test]
    fn all_templates_instantiate_to_valid_specs() {
        let dir = tempfile::tempdir().unwrap();
        let db = Database::open(
            dir.path(),
            DatabaseOptions {
                background_workers: false,
                wal_sync: arcdb::storage::WalSync::Disabled,
                ..Default::default()
            },
        )
        .unwrap();
        let config = WorkloadConfig::small(11);
        let (tables, dataset) = generate_dataset(&db, &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for id in TEMPLATE_IDS {
            for _ in 0..5 {
                let spec = instantiate(&dataset, id, &mut rng);
                spec.validate(&tables.tweets.schema).unwrap();
                match template_kind(id) {
                    TemplateKind::HybridSearch => assert!(spec.rank.is_none()),
                    TemplateKind::HybridNn => assert!(spec.rank.is_some()),
                }
            }
        }
    }
}
