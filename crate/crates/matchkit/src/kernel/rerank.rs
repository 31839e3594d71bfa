use std::collections::BTreeMap;

use crate::error::Result;
use crate::index::FieldPolicy;
use crate::run::{rank_order, RankedList, TrecRun};
use crate::text::{tokenize, Document, Query, TokenizerConfig};
use crate::Real;

use super::train::Model;

/// Pre-tokenized documents and queries, keyed by id, shared by reranking
/// and training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenizedCollection {
    pub docs: BTreeMap<String, Vec<String>>,
    pub queries: BTreeMap<String, Vec<String>>,
}

impl TokenizedCollection {
    pub fn build(
        docs: &[Document],
        queries: &[Query],
        config: &TokenizerConfig,
        field_policy: FieldPolicy,
    ) -> Self {
        TokenizedCollection {
            docs: docs
                .iter()
                .map(|d| {
                    (
                        d.doc_id.clone(),
                        crate::index::index_tokens(d, config, field_policy),
                    )
                })
                .collect(),
            queries: queries
                .iter()
                .map(|q| (q.query_id.clone(), tokenize(&q.text, config)))
                .collect(),
        }
    }
}

/// Rescore the top-`depth` documents of each query with the model.
/// Documents beyond the depth keep their first-stage order below every
/// rescored document (they are assigned strictly decreasing scores under
/// the rescored minimum so the output file re-sorts stably).
pub fn rerank(
    model: &Model,
    first_stage: &TrecRun,
    collection: &TokenizedCollection,
    depth: usize,
    tag: &str,
) -> Result<TrecRun> {
    let mut out = TrecRun::new(tag);
    for list in &first_stage.lists {
        if depth == 0 {
            out.lists.push(list.clone());
            continue;
        }
        let empty: Vec<String> = Vec::new();
        let q_tokens = collection
            .queries
            .get(&list.query_id)
            .unwrap_or(&empty)
            .clone();
        let cut = depth.min(list.entries.len());
        let mut rescored: Vec<(String, Real)> = Vec::with_capacity(cut);
        for (doc_id, _) in &list.entries[..cut] {
            let d_tokens = collection.docs.get(doc_id).unwrap_or(&empty);
            let score = model.score(&q_tokens, d_tokens)?;
            rescored.push((doc_id.clone(), score));
        }
        rescored.sort_by(rank_order);
        let floor = rescored
            .iter()
            .map(|(_, s)| *s)
            .fold(Real::INFINITY, Real::min);
        let floor = if floor.is_finite() { floor } else { 0.0 };
        for (i, (doc_id, _)) in list.entries[cut..].iter().enumerate() {
            rescored.push((doc_id.clone(), floor - (i + 1) as Real));
        }
        out.lists.push(RankedList {
            query_id: list.query_id.clone(),
            entries: rescored,
        });
    }
    Ok(out)
}
