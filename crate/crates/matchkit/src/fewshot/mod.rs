//! Weak supervision for the neural rerankers: synthesize pseudo-labeled
//! triples from document titles and filter/reweight them by how each
//! training step moves a held-out validation metric.
//!
//! The selector is a greedy accept/reject loop with additive weight
//! updates. It keeps a step when validation NDCG@10 did not drop and
//! rolls the model (and optimizer state) back otherwise, so the
//! validation metric is non-decreasing over the whole run by
//! construction.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::Qrels;
use crate::index::InvertedIndex;
use crate::kernel::{
    validate, weighted_train_step, Model, Optimizer, TokenizedCollection, TrainSet, Triple,
    TrainingConfig, ValidationSet,
};
use crate::sparse::{retrieve, SparseScorerConfig};
use crate::text::tokenize::tokenize;
use crate::text::{Document, Query};
use crate::Real;

/// One synthesized training triple: the document title acts as a query,
/// the source document as the positive, and a BM25-confusable document
/// as the negative.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakTriple {
    pub pseudo_query: Vec<String>,
    pub pos_doc_id: String,
    pub neg_doc_id: String,
    pub source_tag: String,
    pub weight: Real,
}

pub const SOURCE_TITLE_AS_QUERY: &str = "title_as_query";

/// For every titled document, issue its title as a BM25 query against
/// `index` and sample `negatives_per_positive` negatives from the
/// top-`bm25_pool_depth` results, excluding the source document itself.
/// Documents whose pool comes back empty are skipped. Sampling is
/// without replacement and deterministic under `seed`.
pub fn synthesize_weak_pairs(
    corpus: &[Document],
    index: &InvertedIndex,
    negatives_per_positive: usize,
    bm25_pool_depth: usize,
    seed: u64,
) -> Result<Vec<WeakTriple>> {
    let titled: Vec<&Document> = corpus.iter().filter(|d| !d.title.trim().is_empty()).collect();
    if titled.is_empty() {
        return Err(Error::NoTitledDocuments);
    }
    if negatives_per_positive == 0 {
        return Ok(Vec::new());
    }
    let bm25 = SparseScorerConfig::default_bm25();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triples = Vec::new();
    for doc in titled {
        let pseudo_query = tokenize(&doc.title, index.tokenizer());
        let query = Query {
            query_id: doc.doc_id.clone(),
            text: doc.title.clone(),
        };
        let ranked = retrieve(&query, index, &bm25, bm25_pool_depth.max(1))?;
        let pool: Vec<&String> = ranked
            .entries
            .iter()
            .map(|(doc_id, _)| doc_id)
            .filter(|doc_id| **doc_id != doc.doc_id)
            .collect();
        if pool.is_empty() {
            continue;
        }
        let mut sampled: Vec<&String> = pool.clone();
        sampled.shuffle(&mut rng);
        sampled.truncate(negatives_per_positive);
        for neg in sampled {
            triples.push(WeakTriple {
                pseudo_query: pseudo_query.clone(),
                pos_doc_id: doc.doc_id.clone(),
                neg_doc_id: neg.clone(),
                source_tag: SOURCE_TITLE_AS_QUERY.to_string(),
                weight: 1.0,
            });
        }
    }
    Ok(triples)
}

/// Accept/reject record for one candidate step.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub step: usize,
    pub batch_id: usize,
    pub reward: Real,
    pub kept: bool,
    /// Batch weight after the update.
    pub weight: Real,
}

#[derive(Debug, Clone)]
pub struct SelectiveConfig {
    pub training: TrainingConfig,
    /// Additive weight step applied after every accept (+) or reject (-).
    pub alpha: Real,
    /// Passes over the surviving batches.
    pub rounds: usize,
}

impl Default for SelectiveConfig {
    fn default() -> Self {
        SelectiveConfig {
            training: TrainingConfig::default(),
            alpha: 0.2,
            rounds: 1,
        }
    }
}

fn resolve_triple(
    weak: &WeakTriple,
    collection: &TokenizedCollection,
) -> Result<Triple> {
    let doc = |id: &str| {
        collection.docs.get(id).cloned().ok_or_else(|| {
            Error::InvalidParam(format!("weak triple references unknown doc id `{id}`"))
        })
    };
    Ok(Triple {
        query: weak.pseudo_query.clone(),
        positive: doc(&weak.pos_doc_id)?,
        negative: doc(&weak.neg_doc_id)?,
    })
}

/// Train on weak batches under validation feedback. Each candidate step
/// is applied tentatively; the reward is the change in validation
/// NDCG@10. A non-negative reward keeps the step and raises the batch
/// weight by alpha (capped at 1); a negative reward rolls the step back
/// and lowers it by alpha (floored at 0). Weight-0 batches are dropped
/// from later rounds. Triple weights in `weak` are updated in place to
/// their batch's final weight.
pub fn selective_train(
    model: &mut Model,
    weak: &mut [WeakTriple],
    collection: &TokenizedCollection,
    valid: &ValidationSet,
    qrels: &Qrels,
    config: &SelectiveConfig,
) -> Result<Vec<SelectionRecord>> {
    if weak.is_empty() {
        return Err(Error::EmptyTrainingData);
    }
    let has_relevant = qrels
        .judgments
        .values()
        .any(|docs| docs.values().any(|&rel| rel > 0));
    if !has_relevant {
        return Err(Error::NoRelevantDocuments);
    }

    let batch_size = config.training.batch_size.max(1);
    let batches: Vec<Vec<Triple>> = weak
        .chunks(batch_size)
        .map(|chunk| chunk.iter().map(|w| resolve_triple(w, collection)).collect())
        .collect::<Result<_>>()?;
    let mut weights: Vec<Real> = weak
        .chunks(batch_size)
        .map(|chunk| chunk.iter().map(|w| w.weight).sum::<Real>() / chunk.len() as Real)
        .collect();
    let mut dropped: BTreeSet<usize> = weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w <= 0.0)
        .map(|(i, _)| i)
        .collect();

    let (params, _) = crate::kernel::train::flatten_params(model, &config.training.trainable);
    let mut optimizer = Optimizer::new(config.training.optimizer, params.len());

    let mut current = validate(model, valid, qrels)?;
    let mut history = Vec::new();
    let mut step = 0usize;
    for _round in 0..config.rounds {
        for (batch_id, batch) in batches.iter().enumerate() {
            if dropped.contains(&batch_id) {
                continue;
            }
            let snapshot_model = model.clone();
            let snapshot_opt = optimizer.clone();
            weighted_train_step(
                model,
                &TrainSet::Pairwise(batch.clone()),
                &config.training,
                &mut optimizer,
                weights[batch_id],
            )?;
            let after = validate(model, valid, qrels)?;
            let reward = after - current;
            let kept = reward >= 0.0;
            if kept {
                current = after;
                weights[batch_id] = (weights[batch_id] + config.alpha).min(1.0);
            } else {
                *model = snapshot_model;
                optimizer = snapshot_opt;
                weights[batch_id] = (weights[batch_id] - config.alpha).max(0.0);
                if weights[batch_id] < 1e-9 {
                    weights[batch_id] = 0.0;
                    dropped.insert(batch_id);
                }
            }
            history.push(SelectionRecord {
                step,
                batch_id,
                reward,
                kept,
                weight: weights[batch_id],
            });
            step += 1;
        }
    }

    for (chunk, &w) in weak.chunks_mut(batch_size).zip(&weights) {
        for triple in chunk {
            triple.weight = w;
        }
    }
    Ok(history)
}

/// Write the selection history as `step batch_id reward decision weight`.
pub fn write_selection_history(history: &[SelectionRecord], mut out: impl Write) -> Result<()> {
    let io_err = |e| Error::io("<selection history>", e);
    writeln!(out, "step\tbatch_id\treward\tdecision\tweight").map_err(io_err)?;
    for rec in history {
        writeln!(
            out,
            "{}\t{}\t{:.6}\t{}\t{:.2}",
            rec.step,
            rec.batch_id,
            rec.reward,
            if rec.kept { "keep" } else { "rollback" },
            rec.weight
        )
        .map_err(io_err)?;
    }
    Ok(())
}
