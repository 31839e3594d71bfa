use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{ndcg10, Qrels};
use crate::run::TrecRun;
use crate::Real;

use super::convknrm::{ConvGrads, ConvKnrmModel, FilterBank};
use super::knrm::{KnrmModel, RankingGrads};
use super::rerank::{rerank, TokenizedCollection};

/// Either kernel ranker, behind one training/checkpoint surface.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Model {
    Knrm(KnrmModel),
    ConvKnrm(ConvKnrmModel),
}

impl Model {
    pub fn score(&self, q_tokens: &[String], d_tokens: &[String]) -> Result<Real> {
        match self {
            Model::Knrm(m) => m.score(q_tokens, d_tokens),
            Model::ConvKnrm(m) => m.score(q_tokens, d_tokens),
        }
    }

    pub fn embeddings(&self) -> &super::Embeddings {
        match self {
            Model::Knrm(m) => &m.embeddings,
            Model::ConvKnrm(m) => &m.embeddings,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub enum ModelGrads {
    #[default]
    Empty,
    Knrm(RankingGrads),
    ConvKnrm(ConvGrads),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum LossConfig {
    PairwiseHinge { margin: Real },
    PointwiseBce,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig::PairwiseHinge { margin: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum OptimizerConfig {
    Sgd {
        lr: Real,
    },
    Adam {
        lr: Real,
        beta1: Real,
        beta2: Real,
        eps: Real,
    },
}

impl OptimizerConfig {
    pub fn adam(lr: Real) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::adam(1e-3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TrainableFlags {
    pub ranking_layer: bool,
    pub conv_filters: bool,
    pub embeddings: bool,
}

impl Default for TrainableFlags {
    fn default() -> Self {
        TrainableFlags {
            ranking_layer: true,
            conv_filters: true,
            embeddings: false,
        }
    }
}

impl TrainableFlags {
    pub fn any(&self) -> bool {
        self.ranking_layer || self.conv_filters || self.embeddings
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainingConfig {
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub patience: usize,
    pub trainable: TrainableFlags,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            loss: LossConfig::default(),
            optimizer: OptimizerConfig::default(),
            batch_size: 16,
            epochs: 20,
            seed: 42,
            patience: 5,
            trainable: TrainableFlags::default(),
        }
    }
}

/// A pairwise training example as token sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    pub query: Vec<String>,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

/// A pointwise training example.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub query: Vec<String>,
    pub doc: Vec<String>,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainSet {
    Pairwise(Vec<Triple>),
    Pointwise(Vec<LabeledPair>),
}

impl TrainSet {
    pub fn len(&self) -> usize {
        match self {
            TrainSet::Pairwise(t) => t.len(),
            TrainSet::Pointwise(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Validation context: rerank `run` to depth and score NDCG@10.
#[derive(Debug, Clone)]
pub struct ValidationSet {
    pub collection: TokenizedCollection,
    pub run: TrecRun,
    pub depth: usize,
}

fn sigmoid(x: Real) -> Real {
    1.0 / (1.0 + (-x).exp())
}

/// Compute the mean batch loss and accumulate gradients for every
/// trainable parameter. Pairwise hinge: mean over triples of
/// max(0, margin - s(q,d+) + s(q,d-)). Pointwise: binary cross-entropy
/// on sigmoid(score).
pub fn backward(
    model: &Model,
    batch: &TrainSet,
    loss: &LossConfig,
    flags: &TrainableFlags,
) -> Result<(Real, ModelGrads)> {
    if !flags.any() {
        return Err(Error::NoTrainableParams);
    }
    if batch.is_empty() {
        return Err(Error::EmptyTrainingData);
    }
    let mut grads = match model {
        Model::Knrm(_) => ModelGrads::Knrm(RankingGrads::default()),
        Model::ConvKnrm(_) => ModelGrads::ConvKnrm(ConvGrads::default()),
    };
    let inv_n = 1.0 / batch.len() as Real;
    let mut total_loss = 0.0;

    let add = |model: &Model,
                   q: &[String],
                   d: &[String],
                   d_score: Real,
                   grads: &mut ModelGrads|
     -> Result<Real> {
        match (model, grads) {
            (Model::Knrm(m), ModelGrads::Knrm(g)) => {
                let fwd = m.forward(q, d)?;
                if d_score != 0.0 {
                    m.backward(&fwd, d_score, flags.embeddings, g);
                }
                Ok(fwd.score)
            }
            (Model::ConvKnrm(m), ModelGrads::ConvKnrm(g)) => {
                let fwd = m.forward(q, d)?;
                if d_score != 0.0 {
                    m.backward(&fwd, d_score, flags.conv_filters, flags.embeddings, g);
                }
                Ok(fwd.score)
            }
            _ => unreachable!("grads variant matches model variant"),
        }
    };

    match (batch, loss) {
        (TrainSet::Pairwise(triples), LossConfig::PairwiseHinge { margin }) => {
            for triple in triples {
                let s_pos = model.score(&triple.query, &triple.positive)?;
                let s_neg = model.score(&triple.query, &triple.negative)?;
                let violation = margin - s_pos + s_neg;
                if violation > 0.0 {
                    total_loss += violation * inv_n;
                    add(model, &triple.query, &triple.positive, -inv_n, &mut grads)?;
                    add(model, &triple.query, &triple.negative, inv_n, &mut grads)?;
                }
            }
        }
        (TrainSet::Pointwise(pairs), LossConfig::PointwiseBce) => {
            for pair in pairs {
                let s = model.score(&pair.query, &pair.doc)?;
                let p = sigmoid(s);
                let y = if pair.label { 1.0 } else { 0.0 };
                total_loss += -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()) * inv_n;
                // d(BCE)/d(score) = sigmoid(score) - y
                add(model, &pair.query, &pair.doc, (p - y) * inv_n, &mut grads)?;
            }
        }
        (TrainSet::Pairwise(_), LossConfig::PointwiseBce) => {
            return Err(Error::InvalidParam(
                "pointwise loss given pairwise data".into(),
            ));
        }
        (TrainSet::Pointwise(_), LossConfig::PairwiseHinge { .. }) => {
            return Err(Error::InvalidParam(
                "pairwise loss given pointwise data".into(),
            ));
        }
    }
    Ok((total_loss, grads))
}

/// Flat parameter view: (values, index from which updates are sparse).
/// Order: w, b, filters (by size), embeddings (by token). Gradients are
/// flattened in the same order.
pub(crate) fn flatten_params(model: &Model, flags: &TrainableFlags) -> (Vec<Real>, usize) {
    let mut out = Vec::new();
    match model {
        Model::Knrm(m) => {
            if flags.ranking_layer {
                out.extend_from_slice(&m.w);
                out.push(m.b);
            }
            let dense_len = out.len();
            if flags.embeddings {
                for v in m.embeddings.table.values() {
                    out.extend_from_slice(v);
                }
            }
            (out, dense_len)
        }
        Model::ConvKnrm(m) => {
            if flags.ranking_layer {
                out.extend_from_slice(&m.w);
                out.push(m.b);
            }
            if flags.conv_filters {
                for bank in m.filters.values() {
                    for row in &bank.weights {
                        out.extend_from_slice(row);
                    }
                    out.extend_from_slice(&bank.bias);
                }
            }
            let dense_len = out.len();
            if flags.embeddings {
                for v in m.embeddings.table.values() {
                    out.extend_from_slice(v);
                }
            }
            (out, dense_len)
        }
    }
}

pub(crate) fn assign_params(model: &mut Model, flags: &TrainableFlags, params: &[Real]) {
    let mut cursor = 0usize;
    let mut take = |n: usize| {
        let slice = &params[cursor..cursor + n];
        cursor += n;
        slice
    };
    match model {
        Model::Knrm(m) => {
            if flags.ranking_layer {
                let k = m.w.len();
                m.w.copy_from_slice(take(k));
                m.b = take(1)[0];
            }
            if flags.embeddings {
                let dim = m.embeddings.dim;
                for v in m.embeddings.table.values_mut() {
                    v.copy_from_slice(take(dim));
                }
            }
        }
        Model::ConvKnrm(m) => {
            if flags.ranking_layer {
                let k = m.w.len();
                m.w.copy_from_slice(take(k));
                m.b = take(1)[0];
            }
            if flags.conv_filters {
                for bank in m.filters.values_mut() {
                    for row in &mut bank.weights {
                        let n = row.len();
                        row.copy_from_slice(take(n));
                    }
                    let n = bank.bias.len();
                    bank.bias.copy_from_slice(take(n));
                }
            }
            if flags.embeddings {
                let dim = m.embeddings.dim;
                for v in m.embeddings.table.values_mut() {
                    v.copy_from_slice(take(dim));
                }
            }
        }
    }
    debug_assert_eq!(cursor, params.len());
}

pub(crate) fn flatten_grads(model: &Model, flags: &TrainableFlags, grads: &ModelGrads) -> Vec<Real> {
    let mut out = Vec::new();
    match (model, grads) {
        (Model::Knrm(m), ModelGrads::Knrm(g)) => {
            if flags.ranking_layer {
                if g.w.is_empty() {
                    out.extend(std::iter::repeat(0.0).take(m.w.len()));
                } else {
                    out.extend_from_slice(&g.w);
                }
                out.push(g.b);
            }
            if flags.embeddings {
                for (token, _) in &m.embeddings.table {
                    match g.embeddings.get(token) {
                        Some(gv) => out.extend_from_slice(gv),
                        None => out.extend(std::iter::repeat(0.0).take(m.embeddings.dim)),
                    }
                }
            }
        }
        (Model::ConvKnrm(m), ModelGrads::ConvKnrm(g)) => {
            if flags.ranking_layer {
                if g.w.is_empty() {
                    out.extend(std::iter::repeat(0.0).take(m.w.len()));
                } else {
                    out.extend_from_slice(&g.w);
                }
                out.push(g.b);
            }
            if flags.conv_filters {
                for (&n, bank) in &m.filters {
                    let zero = FilterBank::zeros(bank.num_filters(), n, m.embeddings.dim);
                    let gb = g.filters.get(&n).unwrap_or(&zero);
                    for row in &gb.weights {
                        out.extend_from_slice(row);
                    }
                    out.extend_from_slice(&gb.bias);
                }
            }
            if flags.embeddings {
                for (token, _) in &m.embeddings.table {
                    match g.embeddings.get(token) {
                        Some(gv) => out.extend_from_slice(gv),
                        None => out.extend(std::iter::repeat(0.0).take(m.embeddings.dim)),
                    }
                }
            }
        }
        _ => unreachable!("grads variant matches model variant"),
    }
    out
}

/// Adam/SGD over the flat parameter vector. Parameters at or past
/// `sparse_from` (embedding slots) follow the sparse update contract:
/// a zero gradient leaves the parameter and its optimizer state alone.
#[derive(Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    m: Vec<Real>,
    v: Vec<Real>,
    t: Vec<u64>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, num_params: usize) -> Self {
        Optimizer {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: vec![0; num_params],
        }
    }

    pub fn step(&mut self, params: &mut [Real], grads: &[Real], sparse_from: usize) {
        match self.config {
            OptimizerConfig::Sgd { lr } => {
                for (p, &g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                for (i, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
                    if i >= sparse_from && g == 0.0 {
                        continue;
                    }
                    self.t[i] += 1;
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.m[i] / (1.0 - beta1.powi(self.t[i] as i32));
                    let v_hat = self.v[i] / (1.0 - beta2.powi(self.t[i] as i32));
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: Real,
    pub valid_ndcg10: Real,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_valid_ndcg10: Real,
}

/// Apply one optimizer step from one batch; returns the batch loss.
pub fn train_step(
    model: &mut Model,
    batch: &TrainSet,
    config: &TrainingConfig,
    optimizer: &mut Optimizer,
) -> Result<Real> {
    weighted_train_step(model, batch, config, optimizer, 1.0)
}

/// `train_step` with the batch gradient scaled by `weight` (used by the
/// weak-supervision selector to soften partially trusted batches).
pub fn weighted_train_step(
    model: &mut Model,
    batch: &TrainSet,
    config: &TrainingConfig,
    optimizer: &mut Optimizer,
    weight: Real,
) -> Result<Real> {
    let (loss, grads) = backward(model, batch, &config.loss, &config.trainable)?;
    let (mut params, sparse_from) = flatten_params(model, &config.trainable);
    let mut flat_grads = flatten_grads(model, &config.trainable, &grads);
    if weight != 1.0 {
        for g in &mut flat_grads {
            *g *= weight;
        }
    }
    optimizer.step(&mut params, &flat_grads, sparse_from);
    assign_params(model, &config.trainable, &params);
    Ok(loss)
}

/// Mini-batch training with per-epoch validation NDCG@10 and early
/// stopping; returns the history and leaves the model at the best
/// validation epoch. Deterministic for a fixed seed.
pub fn train(
    model: &mut Model,
    train_data: &TrainSet,
    valid: &ValidationSet,
    qrels: &Qrels,
    config: &TrainingConfig,
) -> Result<TrainHistory> {
    if train_data.is_empty() {
        return Err(Error::EmptyTrainingData);
    }
    if !config.trainable.any() {
        return Err(Error::NoTrainableParams);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (initial_params, _) = flatten_params(model, &config.trainable);
    let mut optimizer = Optimizer::new(config.optimizer, initial_params.len());

    let mut history = TrainHistory::default();
    let mut best_params = initial_params;
    let mut best_metric = validate(model, valid, qrels)?;
    history.best_valid_ndcg10 = best_metric;
    let mut since_best = 0usize;

    let mut order: Vec<usize> = (0..train_data.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut num_batches = 0usize;
        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch = subset(train_data, chunk);
            epoch_loss += train_step(model, &batch, config, &mut optimizer)?;
            num_batches += 1;
        }
        let valid_metric = validate(model, valid, qrels)?;
        history.epochs.push(EpochStats {
            epoch,
            mean_loss: epoch_loss / num_batches.max(1) as Real,
            valid_ndcg10: valid_metric,
        });
        if valid_metric > best_metric {
            best_metric = valid_metric;
            best_params = flatten_params(model, &config.trainable).0;
            history.best_epoch = epoch;
            history.best_valid_ndcg10 = valid_metric;
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience > 0 && since_best >= config.patience {
                break;
            }
        }
    }
    assign_params(model, &config.trainable, &best_params);
    Ok(history)
}

pub(crate) fn subset(data: &TrainSet, indices: &[usize]) -> TrainSet {
    match data {
        TrainSet::Pairwise(t) => {
            TrainSet::Pairwise(indices.iter().map(|&i| t[i].clone()).collect())
        }
        TrainSet::Pointwise(p) => {
            TrainSet::Pointwise(indices.iter().map(|&i| p[i].clone()).collect())
        }
    }
}

/// Validation NDCG@10 of the model reranking the validation run.
pub fn validate(model: &Model, valid: &ValidationSet, qrels: &Qrels) -> Result<Real> {
    let reranked = rerank(model, &valid.run, &valid.collection, valid.depth, "valid")?;
    Ok(ndcg10(&reranked, qrels))
}

/// Fraction of triples the model orders correctly (s+ > s-).
pub fn pairwise_accuracy(model: &Model, triples: &[Triple]) -> Result<Real> {
    if triples.is_empty() {
        return Err(Error::EmptyTrainingData);
    }
    let mut correct = 0usize;
    for triple in triples {
        let s_pos = model.score(&triple.query, &triple.positive)?;
        let s_neg = model.score(&triple.query, &triple.negative)?;
        if s_pos > s_neg {
            correct += 1;
        }
    }
    Ok(correct as Real / triples.len() as Real)
}

/// Read `query_id<TAB>pos_doc_id<TAB>neg_doc_id` and resolve ids against
/// the tokenized collection.
pub fn load_triples(
    path: impl AsRef<Path>,
    collection: &TokenizedCollection,
) -> Result<Vec<Triple>> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    let mut triples = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path_str, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(&path_str, idx + 1, "expected 3 tab-separated fields"));
        }
        let resolve = |kind: &str, id: &str, table: &BTreeMap<String, Vec<String>>| {
            table.get(id).cloned().ok_or_else(|| {
                Error::parse(&path_str, idx + 1, format!("unknown {kind} id `{id}`"))
            })
        };
        triples.push(Triple {
            query: resolve("query", fields[0], &collection.queries)?,
            positive: resolve("doc", fields[1], &collection.docs)?,
            negative: resolve("doc", fields[2], &collection.docs)?,
        });
    }
    Ok(triples)
}

/// Read `query_id<TAB>doc_id<TAB>label` with label in {0, 1}.
pub fn load_pointwise_labels(
    path: impl AsRef<Path>,
    collection: &TokenizedCollection,
) -> Result<Vec<LabeledPair>> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path_str, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(&path_str, idx + 1, "expected 3 tab-separated fields"));
        }
        let label = match fields[2] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    &path_str,
                    idx + 1,
                    format!("label must be 0 or 1, got `{other}`"),
                ))
            }
        };
        let query = collection.queries.get(fields[0]).cloned().ok_or_else(|| {
            Error::parse(&path_str, idx + 1, format!("unknown query id `{}`", fields[0]))
        })?;
        let doc = collection.docs.get(fields[1]).cloned().ok_or_else(|| {
            Error::parse(&path_str, idx + 1, format!("unknown doc id `{}`", fields[1]))
        })?;
        pairs.push(LabeledPair { query, doc, label });
    }
    Ok(pairs)
}
