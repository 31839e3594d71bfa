//! Shared support for the integration suites: brute-force reference
//! scorers over raw token sequences (no inverted index, no shared code
//! with the library scorers) and synthetic data generators.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use matchkit::Real;

/// A corpus as raw token sequences, indexed by ordinal.
pub type TokenDocs = Vec<Vec<String>>;

fn doc_tf(doc: &[String], term: &str) -> u32 {
    doc.iter().filter(|t| *t == term).count() as u32
}

fn df(docs: &TokenDocs, term: &str) -> u32 {
    docs.iter().filter(|d| d.iter().any(|t| t == term)).count() as u32
}

fn ctf(docs: &TokenDocs, term: &str) -> u64 {
    docs.iter().map(|d| doc_tf(d, term) as u64).sum()
}

fn total_terms(docs: &TokenDocs) -> u64 {
    docs.iter().map(|d| d.len() as u64).sum()
}

fn avgdl(docs: &TokenDocs) -> Real {
    if docs.is_empty() {
        0.0
    } else {
        total_terms(docs) as Real / docs.len() as Real
    }
}

pub fn oracle_bm25(
    query: &[String],
    docs: &TokenDocs,
    k1: Real,
    b: Real,
) -> BTreeMap<u32, Real> {
    let n = docs.len() as Real;
    let avg = avgdl(docs);
    let mut scores = BTreeMap::new();
    for term in query {
        let term_df = df(docs, term) as Real;
        if term_df == 0.0 {
            continue;
        }
        let idf = (1.0 + (n - term_df + 0.5) / (term_df + 0.5)).ln();
        for (ordinal, doc) in docs.iter().enumerate() {
            let tf = doc_tf(doc, term) as Real;
            if tf == 0.0 {
                continue;
            }
            let norm = if avg > 0.0 {
                1.0 - b + b * doc.len() as Real / avg
            } else {
                1.0
            };
            *scores.entry(ordinal as u32).or_insert(0.0) +=
                idf * tf * (k1 + 1.0) / (tf + k1 * norm);
        }
    }
    scores
}

pub fn oracle_tfidf(query: &[String], docs: &TokenDocs) -> BTreeMap<u32, Real> {
    let n = docs.len() as Real;
    let mut scores = BTreeMap::new();
    for term in query {
        let term_df = df(docs, term) as Real;
        if term_df == 0.0 {
            continue;
        }
        let idf = (n / term_df).ln();
        for (ordinal, doc) in docs.iter().enumerate() {
            let tf = doc_tf(doc, term) as Real;
            if tf == 0.0 {
                continue;
            }
            *scores.entry(ordinal as u32).or_insert(0.0) += (1.0 + tf.ln()) * idf;
        }
    }
    scores
}

pub fn oracle_cosine(query: &[String], docs: &TokenDocs) -> BTreeMap<u32, Real> {
    let n = docs.len() as Real;
    let ltc = |tf: Real, term_df: Real| (1.0 + tf.ln()) * (n / term_df).ln();

    let mut query_tf: BTreeMap<&str, u32> = BTreeMap::new();
    for term in query {
        *query_tf.entry(term).or_insert(0) += 1;
    }
    let mut query_norm_sq = 0.0;
    let mut query_weights: BTreeMap<&str, Real> = BTreeMap::new();
    for (&term, &tf) in &query_tf {
        let term_df = df(docs, term) as Real;
        if term_df == 0.0 {
            continue;
        }
        let w = ltc(tf as Real, term_df);
        query_norm_sq += w * w;
        query_weights.insert(term, w);
    }
    if query_norm_sq == 0.0 {
        return BTreeMap::new();
    }
    let query_norm = query_norm_sq.sqrt();

    let mut scores = BTreeMap::new();
    for (ordinal, doc) in docs.iter().enumerate() {
        let vocab: BTreeSet<&str> = doc.iter().map(String::as_str).collect();
        let mut norm_sq = 0.0;
        for &term in &vocab {
            let w = ltc(doc_tf(doc, term) as Real, df(docs, term) as Real);
            norm_sq += w * w;
        }
        let mut dot = 0.0;
        let mut matched = false;
        for (&term, &qw) in &query_weights {
            let tf = doc_tf(doc, term) as Real;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            dot += qw * ltc(tf, df(docs, term) as Real);
        }
        if matched {
            let norm = norm_sq.sqrt();
            let score = if norm == 0.0 { 0.0 } else { dot / (query_norm * norm) };
            scores.insert(ordinal as u32, score);
        }
    }
    scores
}

pub fn oracle_coordinate_match(query: &[String], docs: &TokenDocs) -> BTreeMap<u32, Real> {
    let distinct: BTreeSet<&str> = query.iter().map(String::as_str).collect();
    let mut scores = BTreeMap::new();
    for (ordinal, doc) in docs.iter().enumerate() {
        let count = distinct.iter().filter(|t| doc.iter().any(|d| d == **t)).count();
        if count > 0 {
            scores.insert(ordinal as u32, count as Real);
        }
    }
    scores
}

pub fn oracle_boolean(
    query: &[String],
    docs: &TokenDocs,
    require_all: bool,
) -> BTreeMap<u32, Real> {
    let distinct: BTreeSet<&str> = query.iter().map(String::as_str).collect();
    if distinct.is_empty() {
        return BTreeMap::new();
    }
    let mut scores = BTreeMap::new();
    for (ordinal, doc) in docs.iter().enumerate() {
        let matched = distinct.iter().filter(|t| doc.iter().any(|d| d == **t)).count();
        let keep = if require_all { matched == distinct.len() } else { matched >= 1 };
        if keep {
            scores.insert(ordinal as u32, 1.0);
        }
    }
    scores
}

pub fn oracle_lm_dirichlet(
    query: &[String],
    docs: &TokenDocs,
    mu: Real,
) -> BTreeMap<u32, Real> {
    let total = total_terms(docs) as Real;
    let mut scores = BTreeMap::new();
    let mut any_known = false;
    for term in query {
        let term_ctf = ctf(docs, term);
        if term_ctf == 0 {
            continue;
        }
        any_known = true;
        let background = term_ctf as Real / total;
        for (ordinal, doc) in docs.iter().enumerate() {
            let tf = doc_tf(doc, term) as Real;
            let dl = doc.len() as Real;
            *scores.entry(ordinal as u32).or_insert(0.0) +=
                ((tf + mu * background) / (dl + mu)).ln();
        }
    }
    if !any_known {
        return BTreeMap::new();
    }
    scores
}

pub fn oracle_lm_jm(query: &[String], docs: &TokenDocs, lambda: Real) -> BTreeMap<u32, Real> {
    let total = total_terms(docs) as Real;
    let mut scores = BTreeMap::new();
    let mut any_known = false;
    for term in query {
        let term_ctf = ctf(docs, term);
        if term_ctf == 0 {
            continue;
        }
        any_known = true;
        let background = term_ctf as Real / total;
        for (ordinal, doc) in docs.iter().enumerate() {
            let dl = doc.len() as Real;
            if dl == 0.0 {
                continue;
            }
            let tf = doc_tf(doc, term) as Real;
            *scores.entry(ordinal as u32).or_insert(0.0) +=
                ((1.0 - lambda) * tf / dl + lambda * background).ln();
        }
    }
    if !any_known {
        return BTreeMap::new();
    }
    scores
}

/// Count positions p of t1 with t2 at p+1.
fn oracle_ordered_count(doc: &[String], t1: &str, t2: &str) -> u32 {
    doc.windows(2).filter(|w| w[0] == t1 && w[1] == t2).count() as u32
}

/// Count position pairs of t1, t2 in either order with |p1 - p2| < window.
fn oracle_unordered_count(doc: &[String], t1: &str, t2: &str, window: usize) -> u32 {
    let mut count = 0;
    for (p1, a) in doc.iter().enumerate() {
        if a != t1 {
            continue;
        }
        for (p2, b) in doc.iter().enumerate() {
            if p1 == p2 || b != t2 {
                continue;
            }
            if p1.abs_diff(p2) < window {
                count += 1;
            }
        }
    }
    count
}

pub fn oracle_sdm(
    query: &[String],
    docs: &TokenDocs,
    w_unigram: Real,
    w_ordered: Real,
    w_unordered: Real,
    window: usize,
    mu: Real,
) -> BTreeMap<u32, Real> {
    let unigram = oracle_lm_dirichlet(query, docs, mu);
    if unigram.is_empty() {
        return BTreeMap::new();
    }
    let mut scores: BTreeMap<u32, Real> =
        unigram.iter().map(|(&o, &s)| (o, w_unigram * s)).collect();

    let total = total_terms(docs) as Real;
    let mut add_window_event = |counts: Vec<u32>, weight: Real| {
        let event_ctf: u64 = counts.iter().map(|&c| c as u64).sum();
        if event_ctf == 0 {
            return;
        }
        let background = event_ctf as Real / total;
        for (ordinal, doc) in docs.iter().enumerate() {
            let count = counts[ordinal] as Real;
            let dl = doc.len() as Real;
            *scores.entry(ordinal as u32).or_insert(0.0) +=
                weight * ((count + mu * background) / (dl + mu)).ln();
        }
    };

    for pair in query.windows(2) {
        let (t1, t2) = (&pair[0], &pair[1]);
        add_window_event(
            docs.iter().map(|d| oracle_ordered_count(d, t1, t2)).collect(),
            w_ordered,
        );
        add_window_event(
            docs.iter()
                .map(|d| oracle_unordered_count(d, t1, t2, window))
                .collect(),
            w_unordered,
        );
    }
    scores
}

/// Random corpus over a small shared vocabulary: 1..=max_docs documents
/// of 0..=40 tokens each. Zipf-ish skew comes from sampling the vocab
/// index squared.
pub fn random_token_docs(rng: &mut ChaCha8Rng, max_docs: usize, vocab: usize) -> TokenDocs {
    let num_docs = rng.gen_range(1..=max_docs);
    (0..num_docs)
        .map(|_| {
            let len = rng.gen_range(0..=40);
            (0..len)
                .map(|_| {
                    let u: f64 = rng.gen();
                    let idx = ((u * u) * vocab as f64) as usize;
                    format!("w{:03}", idx.min(vocab - 1))
                })
                .collect()
        })
        .collect()
}

/// Random query of 1..=5 tokens; roughly one in six tokens is
/// out-of-vocabulary.
pub fn random_query(rng: &mut ChaCha8Rng, vocab: usize) -> Vec<String> {
    let len = rng.gen_range(1..=5);
    (0..len)
        .map(|_| {
            if rng.gen_range(0..6) == 0 {
                "zzunseen".to_string()
            } else {
                format!("w{:03}", rng.gen_range(0..vocab))
            }
        })
        .collect()
}

/// Synthetic embedding vocabulary: two topic clusters plus filler words.
/// Words within a cluster have high pairwise cosine; cross-cluster
/// cosine is low. Used to build corpora whose relevance is semantic by
/// construction.
pub struct TopicVocab {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<Real>>,
    pub topic_words: Vec<Vec<String>>,
    pub filler: Vec<String>,
}

pub fn topic_vocab(rng: &mut ChaCha8Rng, topics: usize, words_per_topic: usize) -> TopicVocab {
    let dim = 8;
    let mut vectors = HashMap::new();
    let mut topic_words = Vec::new();
    for t in 0..topics {
        let mut words = Vec::new();
        for w in 0..words_per_topic {
            // basis direction e_t plus small noise keeps intra-topic
            // cosine near 1 and cross-topic cosine near 0
            let mut v = vec![0.0; dim];
            v[t % dim] = 1.0;
            for x in v.iter_mut() {
                *x += rng.gen_range(-0.05..0.05);
            }
            let word = format!("topic{t}word{w}");
            vectors.insert(word.clone(), v);
            words.push(word);
        }
        topic_words.push(words);
    }
    let mut filler = Vec::new();
    for f in 0..10 {
        let v: Vec<Real> = (0..dim).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let word = format!("filler{f}");
        vectors.insert(word.clone(), v);
        filler.push(word);
    }
    TopicVocab { dim, vectors, topic_words, filler }
}

/// Write an embedding store in word2vec text format.
pub fn write_embeddings(path: &std::path::Path, vocab: &TopicVocab) {
    use std::io::Write;
    let mut entries: Vec<(&String, &Vec<Real>)> = vocab.vectors.iter().collect();
    entries.sort_by(|a, b| a.0.cmp(b.0));
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", entries.len(), vocab.dim));
    for (word, vector) in entries {
        out.push_str(word);
        for x in vector {
            out.push_str(&format!(" {x:.6}"));
        }
        out.push('\n');
    }
    std::fs::File::create(path)
        .unwrap()
        .write_all(out.as_bytes())
        .unwrap();
}

pub fn shuffle_in_place<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    items.shuffle(rng);
}
