//! Sequential dependence scoring: unigram, ordered-bigram, and
//! unordered-window components, each Dirichlet-smoothed over pseudo-counts
//! derived from positions.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::index::InvertedIndex;
use crate::Real;

use super::{score_lm_dirichlet, ScoreMap};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SdmParams {
    pub w_unigram: Real,
    pub w_ordered: Real,
    pub w_unordered: Real,
    pub window: usize,
    pub mu: Real,
}

impl Default for SdmParams {
    fn default() -> Self {
        SdmParams {
            w_unigram: 0.85,
            w_ordered: 0.10,
            w_unordered: 0.05,
            window: 8,
            mu: 2000.0,
        }
    }
}

impl SdmParams {
    pub fn validate(&self) -> Result<()> {
        let sum = self.w_unigram + self.w_ordered + self.w_unordered;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParam(format!(
                "sdm weights must sum to 1, got {sum}"
            )));
        }
        if self.w_unigram < 0.0 || self.w_ordered < 0.0 || self.w_unordered < 0.0 {
            return Err(Error::InvalidParam("sdm weights must be >= 0".into()));
        }
        if self.window < 2 {
            return Err(Error::InvalidParam(format!(
                "sdm window must be >= 2, got {}",
                self.window
            )));
        }
        if !(self.mu > 0.0) {
            return Err(Error::InvalidParam(format!("sdm mu must be > 0, got {}", self.mu)));
        }
        Ok(())
    }
}

/// Per-document count of exact adjacencies: positions p of `t1` with
/// p + 1 among the positions of `t2`.
pub fn ordered_counts(index: &InvertedIndex, t1: &str, t2: &str) -> HashMap<u32, u32> {
    let second: HashMap<u32, &[u32]> = index
        .postings(t2)
        .iter()
        .map(|p| (p.doc_ordinal, p.positions.as_slice()))
        .collect();
    let mut counts = HashMap::new();
    for posting in index.postings(t1) {
        if let Some(positions2) = second.get(&posting.doc_ordinal) {
            let count = posting
                .positions
                .iter()
                .filter(|&&p| positions2.binary_search(&(p + 1)).is_ok())
                .count() as u32;
            if count > 0 {
                counts.insert(posting.doc_ordinal, count);
            }
        }
    }
    counts
}

/// Per-document count of position pairs of `t1` and `t2` (either order)
/// spanning fewer than `window` tokens; identical positions never pair.
pub fn unordered_counts(
    index: &InvertedIndex,
    t1: &str,
    t2: &str,
    window: usize,
) -> HashMap<u32, u32> {
    let second: HashMap<u32, &[u32]> = index
        .postings(t2)
        .iter()
        .map(|p| (p.doc_ordinal, p.positions.as_slice()))
        .collect();
    let mut counts = HashMap::new();
    for posting in index.postings(t1) {
        if let Some(positions2) = second.get(&posting.doc_ordinal) {
            let mut count = 0u32;
            for &p1 in &posting.positions {
                for &p2 in positions2.iter() {
                    if p1 == p2 {
                        continue;
                    }
                    let span = p1.abs_diff(p2) as usize;
                    if span < window {
                        count += 1;
                    }
                }
            }
            if count > 0 {
                counts.insert(posting.doc_ordinal, count);
            }
        }
    }
    counts
}

/// Dirichlet-smoothed log-likelihood for one window event shared across
/// all documents. Events unseen in the whole collection are skipped by
/// the caller.
fn smoothed_component(
    index: &InvertedIndex,
    counts: &HashMap<u32, u32>,
    mu: Real,
    scores: &mut ScoreMap,
    weight: Real,
) {
    let total = index.total_terms() as Real;
    let ctf: u64 = counts.values().map(|&c| c as u64).sum();
    if ctf == 0 {
        return;
    }
    let background = ctf as Real / total;
    for ordinal in 0..index.num_docs() as u32 {
        let count = counts.get(&ordinal).copied().unwrap_or(0) as Real;
        let dl = index.doc_entry(ordinal).doc_length as Real;
        let contrib = ((count + mu * background) / (dl + mu)).ln();
        *scores.entry(ordinal).or_insert(0.0) += weight * contrib;
    }
}

/// Sequential dependence model over consecutive query-term pairs.
pub fn score_sdm(query_tokens: &[String], index: &InvertedIndex, params: &SdmParams) -> ScoreMap {
    let unigram = score_lm_dirichlet(query_tokens, index, params.mu);
    if unigram.is_empty() {
        // all query terms unseen: no pair can have collection mass either
        return ScoreMap::new();
    }
    let mut scores = ScoreMap::new();
    for (&ordinal, &s) in &unigram {
        scores.insert(ordinal, params.w_unigram * s);
    }

    for pair in query_tokens.windows(2) {
        let (t1, t2) = (&pair[0], &pair[1]);
        let ordered = ordered_counts(index, t1, t2);
        smoothed_component(index, &ordered, params.mu, &mut scores, params.w_ordered);
        let unordered = unordered_counts(index, t1, t2, params.window);
        smoothed_component(index, &unordered, params.mu, &mut scores, params.w_unordered);
    }
    scores
}
