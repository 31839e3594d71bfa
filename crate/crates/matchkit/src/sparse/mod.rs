//! Classical bag-of-words and proximity scorers over the inverted index,
//! plus top-k retrieval into TREC runs.

mod sdm;

pub use sdm::{score_sdm, SdmParams};

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::index::InvertedIndex;
use crate::run::{RankedList, TrecRun};
use crate::text::{tokenize, Query};
use crate::Real;

/// Scores keyed by document ordinal. Only candidate documents appear.
pub type ScoreMap = BTreeMap<u32, Real>;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum SparseScorerConfig {
    BooleanAnd,
    BooleanOr,
    TfIdf,
    Cosine,
    CoordinateMatch,
    LmJm { lambda: Real },
    LmDirichlet { mu: Real },
    Bm25 { k1: Real, b: Real },
    Sdm(SdmParams),
}

impl SparseScorerConfig {
    pub fn default_bm25() -> Self {
        SparseScorerConfig::Bm25 { k1: 0.9, b: 0.4 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SparseScorerConfig::LmJm { lambda } => {
                if !(*lambda > 0.0 && *lambda < 1.0) {
                    return Err(Error::InvalidParam(format!(
                        "lm_jm lambda must be in (0,1), got {lambda}"
                    )));
                }
            }
            SparseScorerConfig::LmDirichlet { mu } => {
                if !(*mu > 0.0) {
                    return Err(Error::InvalidParam(format!(
                        "lm_dirichlet mu must be > 0, got {mu}"
                    )));
                }
            }
            SparseScorerConfig::Bm25 { k1, b } => {
                if !(*k1 >= 0.0) {
                    return Err(Error::InvalidParam(format!("bm25 k1 must be >= 0, got {k1}")));
                }
                if !(*b >= 0.0 && *b <= 1.0) {
                    return Err(Error::InvalidParam(format!("bm25 b must be in [0,1], got {b}")));
                }
            }
            SparseScorerConfig::Sdm(params) => params.validate()?,
            _ => {}
        }
        Ok(())
    }

    /// Dispatch a tokenized query to the configured scorer.
    pub fn score(&self, query_tokens: &[String], index: &InvertedIndex) -> ScoreMap {
        match self {
            SparseScorerConfig::BooleanAnd => score_boolean(query_tokens, index, BooleanMode::And),
            SparseScorerConfig::BooleanOr => score_boolean(query_tokens, index, BooleanMode::Or),
            SparseScorerConfig::TfIdf => score_tfidf(query_tokens, index),
            SparseScorerConfig::Cosine => score_cosine(query_tokens, index),
            SparseScorerConfig::CoordinateMatch => score_coordinate_match(query_tokens, index),
            SparseScorerConfig::LmJm { lambda } => score_lm_jm(query_tokens, index, *lambda),
            SparseScorerConfig::LmDirichlet { mu } => score_lm_dirichlet(query_tokens, index, *mu),
            SparseScorerConfig::Bm25 { k1, b } => score_bm25(query_tokens, index, *k1, *b),
            SparseScorerConfig::Sdm(params) => score_sdm(query_tokens, index, params),
        }
    }
}

pub(crate) fn tf_map(index: &InvertedIndex, term: &str) -> HashMap<u32, u32> {
    index
        .postings(term)
        .iter()
        .map(|p| (p.doc_ordinal, p.term_frequency))
        .collect()
}

/// Okapi BM25 with the non-negative `ln(1 + ...)` idf. Only documents
/// containing at least one query term are scored.
pub fn score_bm25(query_tokens: &[String], index: &InvertedIndex, k1: Real, b: Real) -> ScoreMap {
    let n = index.num_docs() as Real;
    let avgdl = index.avgdl();
    let mut scores = ScoreMap::new();
    for term in query_tokens {
        let postings = index.postings(term);
        if postings.is_empty() {
            continue;
        }
        let df = postings.len() as Real;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        for posting in postings {
            let tf = posting.term_frequency as Real;
            let dl = index.doc_entry(posting.doc_ordinal).doc_length as Real;
            let norm = if avgdl > 0.0 { 1.0 - b + b * dl / avgdl } else { 1.0 };
            let contrib = idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            *scores.entry(posting.doc_ordinal).or_insert(0.0) += contrib;
        }
    }
    scores
}

/// Dirichlet-smoothed query likelihood. All documents are scored (a
/// document with tf=0 everywhere still gets the background probability);
/// query terms with ctf=0 are skipped, and a query whose terms are all
/// unseen yields an empty result.
pub fn score_lm_dirichlet(query_tokens: &[String], index: &InvertedIndex, mu: Real) -> ScoreMap {
    let total = index.total_terms() as Real;
    let mut scores = ScoreMap::new();
    let mut any_known = false;
    for term in query_tokens {
        let (_, ctf) = index.term_stats(term);
        if ctf == 0 {
            continue;
        }
        any_known = true;
        let background = ctf as Real / total;
        let tfs = tf_map(index, term);
        for ordinal in 0..index.num_docs() as u32 {
            let tf = tfs.get(&ordinal).copied().unwrap_or(0) as Real;
            let dl = index.doc_entry(ordinal).doc_length as Real;
            let contrib = ((tf + mu * background) / (dl + mu)).ln();
            *scores.entry(ordinal).or_insert(0.0) += contrib;
        }
    }
    if !any_known {
        return ScoreMap::new();
    }
    scores
}

/// Jelinek-Mercer smoothed query likelihood. Documents with dl=0 are
/// skipped (no foreground mass); unseen query terms (ctf=0) are skipped.
pub fn score_lm_jm(query_tokens: &[String], index: &InvertedIndex, lambda: Real) -> ScoreMap {
    let total = index.total_terms() as Real;
    let mut scores = ScoreMap::new();
    let mut any_known = false;
    for term in query_tokens {
        let (_, ctf) = index.term_stats(term);
        if ctf == 0 {
            continue;
        }
        any_known = true;
        let background = ctf as Real / total;
        let tfs = tf_map(index, term);
        for ordinal in 0..index.num_docs() as u32 {
            let dl = index.doc_entry(ordinal).doc_length as Real;
            if dl == 0.0 {
                continue;
            }
            let tf = tfs.get(&ordinal).copied().unwrap_or(0) as Real;
            let contrib = ((1.0 - lambda) * tf / dl + lambda * background).ln();
            *scores.entry(ordinal).or_insert(0.0) += contrib;
        }
    }
    if !any_known {
        return ScoreMap::new();
    }
    scores
}

/// TF-IDF: sum of (1 + ln tf) * ln(N/df) over query terms present in the
/// document.
pub fn score_tfidf(query_tokens: &[String], index: &InvertedIndex) -> ScoreMap {
    let n = index.num_docs() as Real;
    let mut scores = ScoreMap::new();
    for term in query_tokens {
        let postings = index.postings(term);
        if postings.is_empty() {
            continue;
        }
        let idf = (n / postings.len() as Real).ln();
        for posting in postings {
            let tf = posting.term_frequency as Real;
            *scores.entry(posting.doc_ordinal).or_insert(0.0) += (1.0 + tf.ln()) * idf;
        }
    }
    scores
}

fn ltc_weight(tf: Real, n: Real, df: Real) -> Real {
    (1.0 + tf.ln()) * (n / df).ln()
}

/// Cosine similarity between ltc-weighted query and document vectors.
/// Document norms run over the document's full vocabulary.
pub fn score_cosine(query_tokens: &[String], index: &InvertedIndex) -> ScoreMap {
    let n = index.num_docs() as Real;

    let mut query_tf: BTreeMap<&str, u32> = BTreeMap::new();
    for term in query_tokens {
        *query_tf.entry(term).or_insert(0) += 1;
    }

    let mut query_norm_sq = 0.0;
    let mut query_weights: Vec<(&str, Real)> = Vec::new();
    for (&term, &tf) in &query_tf {
        let (df, _) = index.term_stats(term);
        if df == 0 {
            continue;
        }
        let w = ltc_weight(tf as Real, n, df as Real);
        query_norm_sq += w * w;
        query_weights.push((term, w));
    }
    if query_norm_sq == 0.0 {
        return ScoreMap::new();
    }
    let query_norm = query_norm_sq.sqrt();

    // full per-document norms require a pass over the dictionary
    let mut doc_norm_sq: Vec<Real> = vec![0.0; index.num_docs()];
    for term in index.terms().map(str::to_string).collect::<Vec<_>>() {
        let postings = index.postings(&term);
        let df = postings.len() as Real;
        for posting in postings {
            let w = ltc_weight(posting.term_frequency as Real, n, df);
            doc_norm_sq[posting.doc_ordinal as usize] += w * w;
        }
    }

    let mut dots = ScoreMap::new();
    for (term, qw) in &query_weights {
        let postings = index.postings(term);
        let df = postings.len() as Real;
        for posting in postings {
            let dw = ltc_weight(posting.term_frequency as Real, n, df);
            *dots.entry(posting.doc_ordinal).or_insert(0.0) += qw * dw;
        }
    }
    dots.into_iter()
        .map(|(ordinal, dot)| {
            let dnorm = doc_norm_sq[ordinal as usize].sqrt();
            let score = if dnorm == 0.0 { 0.0 } else { dot / (query_norm * dnorm) };
            (ordinal, score)
        })
        .collect()
}

/// Number of distinct query terms present in each document.
pub fn score_coordinate_match(query_tokens: &[String], index: &InvertedIndex) -> ScoreMap {
    let distinct: HashSet<&str> = query_tokens.iter().map(String::as_str).collect();
    let mut scores = ScoreMap::new();
    for term in distinct {
        for posting in index.postings(term) {
            *scores.entry(posting.doc_ordinal).or_insert(0.0) += 1.0;
        }
    }
    scores
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BooleanMode {
    And,
    Or,
}

/// Boolean retrieval: matching documents score 1.0.
pub fn score_boolean(query_tokens: &[String], index: &InvertedIndex, mode: BooleanMode) -> ScoreMap {
    let distinct: Vec<&str> = {
        let set: HashSet<&str> = query_tokens.iter().map(String::as_str).collect();
        set.into_iter().collect()
    };
    if distinct.is_empty() {
        return ScoreMap::new();
    }
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for term in &distinct {
        for posting in index.postings(term) {
            *counts.entry(posting.doc_ordinal).or_insert(0) += 1;
        }
    }
    let required = match mode {
        BooleanMode::And => distinct.len(),
        BooleanMode::Or => 1,
    };
    counts
        .into_iter()
        .filter(|&(_, c)| c >= required)
        .map(|(ordinal, _)| (ordinal, 1.0))
        .collect()
}

/// Score and rank the top-k documents for one query.
pub fn retrieve(
    query: &Query,
    index: &InvertedIndex,
    config: &SparseScorerConfig,
    k: usize,
) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::InvalidParam("retrieval depth k must be > 0".into()));
    }
    config.validate()?;
    let tokens = tokenize(&query.text, index.tokenizer());
    let scores = config.score(&tokens, index);
    let entries = scores
        .into_iter()
        .map(|(ordinal, score)| (index.doc_entry(ordinal).doc_id.clone(), score))
        .collect();
    Ok(RankedList::new(query.query_id.clone(), entries, k))
}

/// Retrieve for a batch of queries, producing a TREC run.
pub fn batch_retrieve(
    queries: &[Query],
    index: &InvertedIndex,
    config: &SparseScorerConfig,
    k: usize,
    tag: &str,
) -> Result<TrecRun> {
    let mut run = TrecRun::new(tag);
    for query in queries {
        run.lists.push(retrieve(query, index, config, k)?);
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{build_index, FieldPolicy};
    use crate::text::{Document, TokenizerConfig};

    fn fixture() -> InvertedIndex {
        let docs = vec![
            Ok(Document {
                doc_id: "d1".into(),
                title: String::new(),
                body: "a b a".into(),
            }),
            Ok(Document {
                doc_id: "d2".into(),
                title: String::new(),
                body: "b c".into(),
            }),
        ];
        build_index(docs, TokenizerConfig::plain(), FieldPolicy::TitleAndBody).unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn bm25_hand_fixture() {
        let index = fixture();
        let scores = score_bm25(&toks("a"), &index, 0.9, 0.4);
        // idf = ln(1 + (2 - 1 + 0.5)/(1 + 0.5)) = ln 2
        // tf=2, dl=3, avgdl=2.5: 2*1.9/(2 + 0.9*(0.6 + 0.4*3/2.5))
        let idf = (2.0_f64).ln();
        let expected = idf * 2.0 * 1.9 / (2.0 + 0.9 * (0.6 + 0.4 * 3.0 / 2.5));
        assert!((scores[&0] - expected).abs() < 1e-12);
        assert!(!scores.contains_key(&1));
    }

    #[test]
    fn bm25_absent_term_contributes_zero() {
        let index = fixture();
        let with = score_bm25(&toks("a zzz"), &index, 0.9, 0.4);
        let without = score_bm25(&toks("a"), &index, 0.9, 0.4);
        assert_eq!(with, without);
    }

    #[test]
    fn bm25_k1_zero_reduces_to_idf_sum() {
        // at k1=0 the tf saturation factor is exactly 1 for every tf >= 1,
        // so the score is coordinate-match weighted by idf
        let index = fixture();
        let scores = score_bm25(&toks("a b"), &index, 0.0, 0.4);
        let n = 2.0_f64;
        for (ordinal, score) in scores {
            let mut expected = 0.0;
            for term in ["a", "b"] {
                let (df, _) = index.term_stats(term);
                let present = index
                    .postings(term)
                    .iter()
                    .any(|p| p.doc_ordinal == ordinal);
                if present {
                    expected += (1.0 + (n - df as f64 + 0.5) / (df as f64 + 0.5)).ln();
                }
            }
            assert!((score - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_background_only_doc() {
        let index = fixture();
        let mu = 2000.0;
        let scores = score_lm_dirichlet(&toks("a"), &index, mu);
        // d2 has tf=0 for "a": pure background
        let background: f64 = 2.0 / 5.0;
        let expected = ((0.0 + mu * background) / (2.0 + mu)).ln();
        assert!((scores[&1] - expected).abs() < 1e-12);
        let expected_d1 = ((2.0 + mu * background) / (3.0 + mu)).ln();
        assert!((scores[&0] - expected_d1).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_all_unseen_terms_empty() {
        let index = fixture();
        assert!(score_lm_dirichlet(&toks("zzz qqq"), &index, 2000.0).is_empty());
    }

    #[test]
    fn dirichlet_large_mu_shrinks_differences() {
        let index = fixture();
        let small = score_lm_dirichlet(&toks("a"), &index, 10.0);
        let large = score_lm_dirichlet(&toks("a"), &index, 1e6);
        let gap_small = (small[&0] - small[&1]).abs();
        let gap_large = (large[&0] - large[&1]).abs();
        assert!(gap_large < gap_small);
    }

    #[test]
    fn jm_hand_fixture() {
        let index = fixture();
        let lambda = 0.4;
        let scores = score_lm_jm(&toks("b"), &index, lambda);
        let background: f64 = 2.0 / 5.0;
        let expected_d1 = (0.6 * 1.0 / 3.0 + 0.4 * background).ln();
        let expected_d2 = (0.6 * 1.0 / 2.0 + 0.4 * background).ln();
        assert!((scores[&0] - expected_d1).abs() < 1e-12);
        assert!((scores[&1] - expected_d2).abs() < 1e-12);
    }

    #[test]
    fn jm_skips_empty_documents() {
        let docs = vec![
            Ok(Document {
                doc_id: "d1".into(),
                title: String::new(),
                body: "a".into(),
            }),
            Ok(Document {
                doc_id: "d2".into(),
                title: String::new(),
                body: String::new(),
            }),
        ];
        let index = build_index(docs, TokenizerConfig::plain(), FieldPolicy::BodyOnly).unwrap();
        let scores = score_lm_jm(&toks("a"), &index, 0.4);
        assert!(scores.contains_key(&0));
        assert!(!scores.contains_key(&1));
    }

    #[test]
    fn coordinate_match_counts_distinct_terms() {
        let index = fixture();
        let scores = score_coordinate_match(&toks("a b"), &index);
        assert_eq!(scores[&0], 2.0);
        assert_eq!(scores[&1], 1.0);
        // duplicates in the query do not double-count
        let scores2 = score_coordinate_match(&toks("a a b"), &index);
        assert_eq!(scores2[&0], 2.0);
    }

    #[test]
    fn boolean_and_or() {
        let index = fixture();
        let and = score_boolean(&toks("a b"), &index, BooleanMode::And);
        assert_eq!(and.len(), 1);
        assert_eq!(and[&0], 1.0);
        let or = score_boolean(&toks("a b"), &index, BooleanMode::Or);
        assert_eq!(or.len(), 2);
        // AND with an absent term matches nothing
        assert!(score_boolean(&toks("a zzz"), &index, BooleanMode::And).is_empty());
        // AND subset of OR
        for ordinal in and.keys() {
            assert!(or.contains_key(ordinal));
        }
    }

    #[test]
    fn cosine_self_similarity() {
        let index = fixture();
        let scores = score_cosine(&toks("a b a"), &index);
        assert!((scores[&0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn retrieve_k_zero_rejected() {
        let index = fixture();
        let q = Query {
            query_id: "q1".into(),
            text: "a".into(),
        };
        assert!(retrieve(&q, &index, &SparseScorerConfig::default_bm25(), 0).is_err());
    }

    #[test]
    fn retrieve_k_larger_than_candidates() {
        let index = fixture();
        let q = Query {
            query_id: "q1".into(),
            text: "a b".into(),
        };
        let list = retrieve(&q, &index, &SparseScorerConfig::default_bm25(), 100).unwrap();
        assert_eq!(list.entries.len(), 2);
    }

    #[test]
    fn equal_scores_tie_break_doc_id_descending() {
        let index = fixture();
        let q = Query {
            query_id: "q1".into(),
            text: "a b c".into(),
        };
        let list = retrieve(&q, &index, &SparseScorerConfig::BooleanOr, 10).unwrap();
        let ids: Vec<&str> = list.entries.iter().map(|(d, _)| d.as_str()).collect();
        assert_eq!(ids, vec!["d2", "d1"]);
    }

    #[test]
    fn config_validation() {
        assert!(SparseScorerConfig::LmJm { lambda: 1.0 }.validate().is_err());
        assert!(SparseScorerConfig::LmDirichlet { mu: 0.0 }.validate().is_err());
        assert!(SparseScorerConfig::Bm25 { k1: -1.0, b: 0.4 }.validate().is_err());
        assert!(SparseScorerConfig::Bm25 { k1: 0.9, b: 1.5 }.validate().is_err());
        assert!(SparseScorerConfig::default_bm25().validate().is_ok());
    }
}
