//! Per-segment inverted index over text columns: a sorted term dictionary
//! mapping terms to posting blocks, with keyword filtering and a
//! relevance-ranked iterator.
//!
//! Root block: tag 3 | u64 doc_count | bloom | u32 n_terms | per term
//! [term | posting handle (u64, u32) | u32 df].
//! Posting block: u32 n | per entry [key | data handle (u64, u32) | u32 tf |
//! u64 seqno | u32 ordinal], keys unique and ascending.
//!
//! Relevance folds tf-idf into a distance: d = 1 / (1 + Σ_t tf·idf(t)),
//! idf(t) = ln(1 + N/df(t)) with segment-local N and df.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::index::{Bloom, CandidateRow, RowLocation, ScoredItem, Summary, KIND_INVERTED};
use crate::storage::cache::BlockCache;
use crate::storage::codec::{self, Reader};
use crate::storage::segment::{Segment, SegmentBuilder};
use crate::storage::BlockHandle;
use crate::value::KeyValue;

/// Lowercase, split on non-alphanumeric, drop tokens shorter than 2 chars.
/// No stemming; deterministic.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(|t| t.to_string())
        .collect()
}

/// Score -> distance fold; strictly decreasing in score, non-negative.
pub fn score_to_distance(score: f64) -> f64 {
    1.0 / (1.0 + score)
}

pub fn idf(doc_count: u64, df: u64) -> f64 {
    (1.0 + doc_count as f64 / df as f64).ln()
}

pub fn build(builder: &mut SegmentBuilder, column_idx: usize) -> Result<(BlockHandle, Summary)> {
    struct Doc {
        key: KeyValue,
        handle: BlockHandle,
        seqno: u64,
        ordinal: u32,
        tf: HashMap<String, u32>,
    }
    let docs: Vec<Doc> = builder
        .indexable_rows()
        .iter()
        .filter(|ir| !ir.row.tombstone)
        .filter_map(|ir| {
            let text = ir.row.values.get(column_idx)?.as_text()?;
            let mut tf: HashMap<String, u32> = HashMap::new();
            for term in tokenize(text) {
                *tf.entry(term).or_insert(0) += 1;
            }
            Some(Doc {
                key: ir.row.key.clone(),
                handle: ir.handle,
                seqno: ir.row.seqno,
                ordinal: ir.ordinal,
                tf,
            })
        })
        .collect();

    let mut postings: std::collections::BTreeMap<String, Vec<(usize, u32)>> = Default::default();
    for (doc_idx, doc) in docs.iter().enumerate() {
        for (term, tf) in &doc.tf {
            postings.entry(term.clone()).or_default().push((doc_idx, *tf));
        }
    }

    let mut dictionary: Vec<(String, BlockHandle, u32)> = Vec::with_capacity(postings.len());
    for (term, mut entries) in postings {
        entries.sort_by(|a, b| docs[a.0].key.cmp(&docs[b.0].key));
        let mut payload = Vec::new();
        codec::put_u32(&mut payload, entries.len() as u32);
        for (doc_idx, tf) in &entries {
            let doc = &docs[*doc_idx];
            codec::put_key(&mut payload, &doc.key);
            codec::put_u64(&mut payload, doc.handle.offset);
            codec::put_u32(&mut payload, doc.handle.length);
            codec::put_u32(&mut payload, *tf);
            codec::put_u64(&mut payload, doc.seqno);
            codec::put_u32(&mut payload, doc.ordinal);
        }
        let handle = builder.add_index_block(&payload);
        dictionary.push((term, handle, entries.len() as u32));
    }

    let bloom = Bloom::build(dictionary.iter().map(|(t, _, _)| t.as_str()), dictionary.len());
    let mut root = Vec::new();
    root.push(KIND_INVERTED);
    codec::put_u64(&mut root, docs.len() as u64);
    bloom.encode(&mut root);
    codec::put_u32(&mut root, dictionary.len() as u32);
    for (term, handle, df) in &dictionary {
        codec::put_str(&mut root, term);
        codec::put_u64(&mut root, handle.offset);
        codec::put_u32(&mut root, handle.length);
        codec::put_u32(&mut root, *df);
    }
    let summary = if docs.is_empty() {
        Summary::Empty
    } else {
        Summary::TermBloom { bloom }
    };
    Ok((builder.add_index_block(&root), summary))
}

pub fn read_summary(r: &mut Reader<'_>) -> Result<Summary> {
    let doc_count = r.u64()?;
    let bloom = Bloom::decode(r)?;
    if doc_count == 0 {
        return Ok(Summary::Empty);
    }
    Ok(Summary::TermBloom { bloom })
}

pub struct TermDictionary {
    pub doc_count: u64,
    /// sorted (term, posting handle, df)
    pub terms: Vec<(String, BlockHandle, u32)>,
}

impl TermDictionary {
    pub fn find(&self, term: &str) -> Option<(BlockHandle, u32)> {
        self.terms
            .binary_search_by(|(t, _, _)| t.as_str().cmp(term))
            .ok()
            .map(|i| (self.terms[i].1, self.terms[i].2))
    }
}

pub fn read_dictionary(segment: &Segment, root: BlockHandle, cache: &BlockCache) -> Result<TermDictionary> {
    let payload = segment.read_block(root, cache)?;
    let mut r = Reader::new(&payload);
    if r.u8()? != KIND_INVERTED {
        return Err(Error::MalformedSegment("expected inverted root".into()));
    }
    let doc_count = r.u64()?;
    let _bloom = Bloom::decode(&mut r)?;
    let n = r.u32()? as usize;
    let mut terms = Vec::with_capacity(n);
    for _ in 0..n {
        let term = r.str()?;
        let handle = BlockHandle::new(segment.id, r.u64()?, r.u32()?);
        let df = r.u32()?;
        terms.push((term, handle, df));
    }
    Ok(TermDictionary { doc_count, terms })
}

pub struct PostingEntry {
    pub key: KeyValue,
    pub handle: BlockHandle,
    pub tf: u32,
    pub seqno: u64,
    pub ordinal: u32,
}

pub fn read_posting(segment: &Segment, handle: BlockHandle, cache: &BlockCache) -> Result<Vec<PostingEntry>> {
    let payload = segment.read_block(handle, cache)?;
    let mut r = Reader::new(&payload);
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let key = codec::read_key(&mut r)?;
        let data = BlockHandle::new(segment.id, r.u64()?, r.u32()?);
        let tf = r.u32()?;
        let seqno = r.u64()?;
        let ordinal = r.u32()?;
        out.push(PostingEntry {
            key,
            handle: data,
            tf,
            seqno,
            ordinal,
        });
    }
    Ok(out)
}

/// Exact set of rows whose tokenized content contains `term`: dictionary
/// binary search, then one posting read.
pub fn keyword_lookup(
    segment: &Segment,
    root: BlockHandle,
    term: &str,
    cache: &BlockCache,
) -> Result<Vec<(u32, CandidateRow)>> {
    let dict = read_dictionary(segment, root, cache)?;
    let Some((posting, _df)) = dict.find(term) else {
        return Ok(Vec::new());
    };
    Ok(read_posting(segment, posting, cache)?
        .into_iter()
        .map(|e| {
            (
                e.ordinal,
                CandidateRow {
                    key: e.key,
                    seqno: e.seqno,
                    location: RowLocation::Disk(e.handle),
                },
            )
        })
        .collect())
}

/// Score all docs in one segment matching at least one query term; sorted by
/// (distance, key).
pub fn score_segment(
    segment: &Segment,
    root: BlockHandle,
    terms: &[String],
    cache: &BlockCache,
) -> Result<Vec<ScoredItem>> {
    let dict = read_dictionary(segment, root, cache)?;
    let mut scores: HashMap<KeyValue, (f64, u64, BlockHandle)> = HashMap::new();
    for term in terms {
        let Some((posting, df)) = dict.find(term) else {
            continue;
        };
        let w = idf(dict.doc_count, df as u64);
        for entry in read_posting(segment, posting, cache)? {
            let slot = scores
                .entry(entry.key)
                .or_insert((0.0, entry.seqno, entry.handle));
            slot.0 += entry.tf as f64 * w;
        }
    }
    let mut items: Vec<ScoredItem> = scores
        .into_iter()
        .map(|(key, (score, seqno, handle))| ScoredItem {
            key,
            seqno,
            distance: score_to_distance(score),
            location: RowLocation::Disk(handle),
        })
        .collect();
    items.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.key.cmp(&b.key)));
    Ok(items)
}

/// Lazy relevance iterator for one segment.
pub struct SegmentTextIter {
    segment: Arc<Segment>,
    root: BlockHandle,
    terms: Vec<String>,
    cache: Arc<BlockCache>,
    opened: Option<std::vec::IntoIter<ScoredItem>>,
    last: Option<f64>,
}

impl SegmentTextIter {
    pub fn new(segment: Arc<Segment>, root: BlockHandle, terms: Vec<String>, cache: Arc<BlockCache>) -> Self {
        SegmentTextIter {
            segment,
            root,
            terms,
            cache,
            opened: None,
            last: None,
        }
    }
}

impl crate::index::SortedDistanceIterator for SegmentTextIter {
    fn next_item(&mut self) -> Result<Option<ScoredItem>> {
        if self.opened.is_none() {
            let items = score_segment(&self.segment, self.root, &self.terms, &self.cache)?;
            self.opened = Some(items.into_iter());
        }
        match self.opened.as_mut().unwrap().next() {
            Some(item) => {
                self.last = Some(item.distance);
                Ok(Some(item))
            }
            None => Ok(None),
        }
    }

    fn last_emitted(&self) -> Option<f64> {
        self.last
    }
}

/// Brute-force tf-idf scorer over raw (key, text) docs with the same local
/// N/df convention; shared by the memtable overlay and test oracles.
pub fn score_corpus(docs: &[(KeyValue, &str)], terms: &[String]) -> Vec<(KeyValue, f64)> {
    let tokenized: Vec<Vec<String>> = docs.iter().map(|(_, t)| tokenize(t)).collect();
    let n = docs.len() as u64;
    let mut out = Vec::new();
    for (i, (key, _)) in docs.iter().enumerate() {
        let mut score = 0.0;
        for term in terms {
            let tf = tokenized[i].iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = tokenized.iter().filter(|ts| ts.contains(term)).count() as u64;
            score += tf * idf(n, df);
        }
        if score > 0.0 {
            out.push((key.clone(), score_to_distance(score)));
        }
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::SortedDistanceIterator;
    use crate::value::{AttributeValue, Row};

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("Hello, World!"), vec!["hello", "world"]);
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("NYC @tweet #NYC"), vec!["nyc", "tweet", "nyc"]);
        assert_eq!(tokenize("a I x"), Vec::<String>::new()); // len < 2 dropped
    }

    fn make_segment(texts: &[&str]) -> (tempfile::TempDir, Arc<Segment>, BlockHandle) {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<Row> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Row {
                key: KeyValue::Int(i as i64),
                seqno: i as u64 + 1,
                tombstone: false,
                values: vec![AttributeValue::Int(i as i64), AttributeValue::Str(t.to_string())],
            })
            .collect();
        let mut builder = SegmentBuilder::new(31, 0);
        builder.add_rows(&rows).unwrap();
        let (root, _) = build(&mut builder, 1).unwrap();
        builder.set_index_region("content", root);
        let seg = builder.finish(dir.path()).unwrap();
        let root = seg.index_regions["content"];
        (dir, seg, root)
    }

    #[test]
    fn keyword_lookup_finds_the_right_doc() {
        let (_dir, seg, root) = make_segment(&[
            "sunny day in the park",
            "storm warning issued tonight",
            "just another tuesday",
        ]);
        let cache = BlockCache::new(1 << 20);
        let got = keyword_lookup(&seg, root, "storm", &cache).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].1.key, KeyValue::Int(1));
        assert!(keyword_lookup(&seg, root, "blizzard", &cache).unwrap().is_empty());
    }

    #[test]
    fn df_tf_conservation() {
        let texts = [
            "alpha beta alpha",
            "beta gamma",
            "alpha alpha alpha delta",
            "gamma gamma beta",
        ];
        let (_dir, seg, root) = make_segment(&texts);
        let cache = BlockCache::new(1 << 20);
        let dict = read_dictionary(&seg, root, &cache).unwrap();
        for (term, handle, df) in &dict.terms {
            let posting = read_posting(&seg, *handle, &cache).unwrap();
            assert_eq!(posting.len() as u32, *df, "df mismatch for {term}");
            let recount_tf: u32 = texts
                .iter()
                .map(|t| tokenize(t).iter().filter(|tok| tok == &term).count() as u32)
                .sum();
            let stored_tf: u32 = posting.iter().map(|e| e.tf).sum();
            assert_eq!(stored_tf, recount_tf, "tf mismatch for {term}");
            // keys unique and ascending within a posting
            assert!(posting.windows(2).all(|w| w[0].key < w[1].key));
        }
    }

    #[test]
    fn relevance_order_matches_brute_force_scorer() {
        let texts = [
            "storm storm storm",
            "storm watch",
            "calm seas ahead",
            "storm surge flooding storm",
            "flooding downtown",
        ];
        let (_dir, seg, root) = make_segment(&texts);
        let cache = Arc::new(BlockCache::new(1 << 20));
        let terms = vec!["storm".to_string(), "flooding".to_string()];
        let mut iter = SegmentTextIter::new(seg, root, terms.clone(), cache);
        let mut got = Vec::new();
        while let Some(item) = iter.next_item().unwrap() {
            got.push((item.key.clone(), item.distance));
        }
        assert!(got.windows(2).all(|w| w[0].1 <= w[1].1));

        let docs: Vec<(KeyValue, &str)> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| (KeyValue::Int(i as i64), *t))
            .collect();
        let want = score_corpus(&docs, &terms);
        assert_eq!(got, want);
    }

    #[test]
    fn keyword_lookup_matches_naive_over_500_trials() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let vocab: Vec<String> = (0..60).map(|i| format!("term{i}")).collect();
        let texts: Vec<String> = (0..400)
            .map(|_| {
                (0..6)
                    .map(|_| vocab[rng.random_range(0..vocab.len())].clone())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let refs: Vec<&str> = texts.iter().map(|s| s.as_str()).collect();
        let (_dir, seg, root) = make_segment(&refs);
        let cache = BlockCache::new(4 << 20);
        for _ in 0..500 {
            // half known vocabulary, half absent terms
            let term = if rng.random_bool(0.5) {
                vocab[rng.random_range(0..vocab.len())].clone()
            } else {
                format!("absent{}", rng.random_range(0..1000))
            };
            let got: std::collections::HashSet<i64> = keyword_lookup(&seg, root, &term, &cache)
                .unwrap()
                .into_iter()
                .map(|(_, c)| c.key.as_int().unwrap())
                .collect();
            let want: std::collections::HashSet<i64> = texts
                .iter()
                .enumerate()
                .filter(|(_, t)| tokenize(t).iter().any(|tok| tok == &term))
                .map(|(i, _)| i as i64)
                .collect();
            assert_eq!(got, want, "term {term}");
        }
    }

    #[test]
    fn repeated_term_ranks_earlier() {
        let (_dir, seg, root) = make_segment(&["ocean ocean", "ocean view"]);
        let cache = Arc::new(BlockCache::new(1 << 20));
        let mut iter = SegmentTextIter::new(seg, root, vec!["ocean".into()], cache);
        let first = iter.next_item().unwrap().unwrap();
        assert_eq!(first.key, KeyValue::Int(0));
    }

    #[test]
    fn no_matches_exhausts_immediately() {
        let (_dir, seg, root) = make_segment(&["nothing here"]);
        let cache = Arc::new(BlockCache::new(1 << 20));
        let mut iter = SegmentTextIter::new(seg, root, vec!["absent".into()], cache);
        assert!(iter.next_item().unwrap().is_none());
    }
}
