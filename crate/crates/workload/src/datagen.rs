//! Synthetic multimodal dataset: geo-tagged tweets with planted embedding
//! clusters and Zipf text, points of interest, and rectangular city regions.
//! Byte-identical under a fixed seed.

use std::sync::Arc;

use arcdb::schema::{ColumnKind, IndexKind, TableSchema};
use arcdb::storage::{Database, Table};
use arcdb::value::{AttributeValue, GeometryValue, Record};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::config::WorkloadConfig;

pub const WORLD: [f64; 4] = [-180.0, -90.0, 180.0, 90.0];
pub const VOCAB_SIZE: usize = 1000;
pub const TWEET_WORDS: usize = 8;

pub fn tweet_schema(dim: usize) -> TableSchema {
    TableSchema::new("tweets")
        .column("id", ColumnKind::Int64)
        .column("time", ColumnKind::Timestamp)
        .column("coordinate", ColumnKind::Geometry)
        .column("content", ColumnKind::Text)
        .column("embedding", ColumnKind::Vector { dim })
        .primary_key("id")
        .index("time", IndexKind::Btree)
        .index("coordinate", IndexKind::Spatial)
        .index("content", IndexKind::Inverted)
        .index("embedding", IndexKind::Ivf { n_centroids: 16 })
}

pub fn poi_schema(dim: usize) -> TableSchema {
    TableSchema::new("pois")
        .column("id", ColumnKind::Int64)
        .column("coordinate", ColumnKind::Geometry)
        .column("description", ColumnKind::Text)
        .column("embedding", ColumnKind::Vector { dim })
        .primary_key("id")
        .index("coordinate", IndexKind::Spatial)
        .index("description", IndexKind::Inverted)
        .index("embedding", IndexKind::Ivf { n_centroids: 16 })
}

pub fn city_schema() -> TableSchema {
    TableSchema::new("cities")
        .column("id", ColumnKind::Int64)
        .column("name", ColumnKind::String)
        .column("geom", ColumnKind::Geometry)
        .primary_key("id")
}

#[derive(Debug, Clone)]
pub struct TweetRow {
    pub id: i64,
    pub time: i64,
    pub point: (f64, f64),
    pub content: String,
    pub embedding: Vec<f32>,
}

/// Everything the workload needs beyond the loaded tables: pending tweets
/// for the write stream and the planted structure for query sampling.
pub struct Dataset {
    pub config: WorkloadConfig,
    pub pending_tweets: Vec<TweetRow>,
    pub preloaded: usize,
    pub cluster_centers: Vec<Vec<f32>>,
    pub spatial_hotspots: Vec<(f64, f64)>,
    pub city_rects: Vec<[f64; 4]>,
    pub vocab: Vec<String>,
}

fn zipf_word(vocab: &[String], rng: &mut ChaCha8Rng) -> String {
    // inverse-rank sampling: P(rank r) ∝ 1/(r+1)
    let h: f64 = (0..vocab.len()).map(|r| 1.0 / (r + 1) as f64).sum();
    let mut target = rng.random::<f64>() * h;
    for (r, word) in vocab.iter().enumerate() {
        target -= 1.0 / (r + 1) as f64;
        if target <= 0.0 {
            return word.clone();
        }
    }
    vocab.last().unwrap().clone()
}

fn tweet_record(row: &TweetRow) -> Record {
    Record::new(row.id)
        .with("time", AttributeValue::Int(row.time))
        .with(
            "coordinate",
            AttributeValue::Geometry(GeometryValue::point(row.point.0, row.point.1)),
        )
        .with("content", AttributeValue::Str(row.content.clone()))
        .with("embedding", AttributeValue::Vector(row.embedding.clone()))
}

pub struct GeneratedTables {
    pub tweets: Arc<Table>,
    pub pois: Arc<Table>,
    pub cities: Arc<Table>,
}

/// Create the three tables and load all POIs, all cities, and the preload
/// fraction of tweets. The remaining tweets become the workload write
/// stream.
pub fn generate_dataset(db: &Arc<Database>, config: &WorkloadConfig) -> arcdb::Result<(GeneratedTables, Dataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let vocab: Vec<String> = (0..VOCAB_SIZE).map(|i| format!("w{i:04}")).collect();

    let cluster_centers: Vec<Vec<f32>> = (0..config.embedding_clusters)
        .map(|_| (0..config.dim).map(|_| rng.random::<f32>() * 10.0).collect())
        .collect();
    let spatial_hotspots: Vec<(f64, f64)> = (0..config.embedding_clusters)
        .map(|_| {
            (
                rng.random_range(WORLD[0] * 0.9..WORLD[2] * 0.9),
                rng.random_range(WORLD[1] * 0.9..WORLD[3] * 0.9),
            )
        })
        .collect();

    let tweets = db.create_table(tweet_schema(config.dim))?;
    let pois = db.create_table(poi_schema(config.dim))?;
    let cities = db.create_table(city_schema())?;

    let mut city_rects = Vec::with_capacity(config.cities);
    for i in 0..config.cities {
        let (cx, cy) = spatial_hotspots[rng.random_range(0..spatial_hotspots.len())];
        let w = rng.random_range(0.5..6.0);
        let h = rng.random_range(0.5..4.0);
        let rect = [
            (cx - w + rng.random_range(-8.0..8.0)).max(WORLD[0]),
            (cy - h + rng.random_range(-8.0..8.0)).max(WORLD[1]),
            0.0,
            0.0,
        ];
        let rect = [
            rect[0],
            rect[1],
            (rect[0] + 2.0 * w).min(WORLD[2]),
            (rect[1] + 2.0 * h).min(WORLD[3]),
        ];
        city_rects.push(rect);
        let rec = Record::new(i as i64)
            .with("name", AttributeValue::Str(format!("city{i:05}")))
            .with("geom", AttributeValue::Geometry(GeometryValue::Rect(rect)));
        cities.put(&rec)?;
    }
    cities.flush_now()?;

    for i in 0..config.pois {
        let cluster = rng.random_range(0..cluster_centers.len());
        let (hx, hy) = spatial_hotspots[cluster];
        let embedding: Vec<f32> = cluster_centers[cluster]
            .iter()
            .map(|c| c + (rng.random::<f32>() - 0.5))
            .collect();
        let words: Vec<String> = (0..4).map(|_| zipf_word(&vocab, &mut rng)).collect();
        let rec = Record::new(i as i64)
            .with(
                "coordinate",
                AttributeValue::Geometry(GeometryValue::point(
                    (hx + rng.random_range(-5.0..5.0)).clamp(WORLD[0], WORLD[2]),
                    (hy + rng.random_range(-5.0..5.0)).clamp(WORLD[1], WORLD[3]),
                )),
            )
            .with("description", AttributeValue::Str(words.join(" ")))
            .with("embedding", AttributeValue::Vector(embedding));
        pois.put(&rec)?;
    }
    pois.flush_now()?;

    let mut all_tweets = Vec::with_capacity(config.tweets);
    for i in 0..config.tweets {
        let cluster = rng.random_range(0..cluster_centers.len());
        let (hx, hy) = spatial_hotspots[cluster];
        let embedding: Vec<f32> = cluster_centers[cluster]
            .iter()
            .map(|c| c + (rng.random::<f32>() - 0.5) * 0.6)
            .collect();
        let point = (
            (hx + rng.random_range(-10.0..10.0)).clamp(WORLD[0], WORLD[2]),
            (hy + rng.random_range(-10.0..10.0)).clamp(WORLD[1], WORLD[3]),
        );
        let content: Vec<String> = (0..TWEET_WORDS).map(|_| zipf_word(&vocab, &mut rng)).collect();
        all_tweets.push(TweetRow {
            id: i as i64,
            time: i as i64, // timestamps increase with ingestion order
            point,
            content: content.join(" "),
            embedding,
        });
    }
    let preloaded = ((config.tweets as f64) * config.preload_fraction).round() as usize;
    for row in &all_tweets[..preloaded.min(all_tweets.len())] {
        tweets.put(&tweet_record(row))?;
    }
    tweets.flush_now()?;
    let pending_tweets = all_tweets.split_off(preloaded.min(all_tweets.len()));

    Ok((
        GeneratedTables {
            tweets,
            pois,
            cities,
        },
        Dataset {
            config: config.clone(),
            pending_tweets,
            preloaded,
            cluster_centers,
            spatial_hotspots,
            city_rects,
            vocab,
        },
    ))
}

pub fn insert_tweet(table: &Arc<Table>, row: &TweetRow) -> arcdb::Result<u64> {
    table.put(&tweet_record(row))
}
