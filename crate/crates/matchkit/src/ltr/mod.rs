//! Learning-to-rank ensembling: turn a set of run files into per-query
//! normalized features and combine them with a linear ranker trained by
//! coordinate ascent (direct metric optimization) or RankNet (pairwise
//! logistic loss).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{ndcg10, Qrels};
use crate::run::{RankedList, TrecRun};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidatePolicy {
    /// Every document that appears in any input run.
    Union,
    /// Only documents that appear in every input run.
    Intersection,
}

/// Per-query normalized feature vectors for (query, doc) candidates.
///
/// Rows are keyed (query_id, doc_id); every row has one entry per
/// feature, min-max normalized to [0, 1] within its query (constant
/// features map to 0.5). `normalization` records the raw per-query
/// (min, max) used for each feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    pub rows: BTreeMap<(String, String), Vec<Real>>,
    pub normalization: BTreeMap<String, Vec<(Real, Real)>>,
}

impl FeatureMatrix {
    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn query_ids(&self) -> Vec<String> {
        let mut out: Vec<String> = self.rows.keys().map(|(q, _)| q.clone()).collect();
        out.dedup();
        out
    }

    fn query_rows(&self) -> BTreeMap<&str, Vec<(&str, &[Real])>> {
        let mut grouped: BTreeMap<&str, Vec<(&str, &[Real])>> = BTreeMap::new();
        for ((qid, did), feats) in &self.rows {
            grouped.entry(qid).or_default().push((did, feats));
        }
        grouped
    }
}

/// Build one feature per named run from its scores. Candidates per
/// query follow `policy`; a document missing from some run takes that
/// feature's per-query minimum before normalization.
pub fn assemble_features(
    runs: &[(String, &TrecRun)],
    policy: CandidatePolicy,
) -> Result<FeatureMatrix> {
    if runs.is_empty() {
        return Err(Error::InvalidParam("feature assembly needs at least one run".into()));
    }
    // score lookup per feature: query -> doc -> score, with duplicate detection
    let mut lookups: Vec<BTreeMap<&str, BTreeMap<&str, Real>>> = Vec::new();
    for (_, run) in runs {
        let mut lookup: BTreeMap<&str, BTreeMap<&str, Real>> = BTreeMap::new();
        for list in &run.lists {
            let docs = lookup.entry(list.query_id.as_str()).or_default();
            for (doc_id, score) in &list.entries {
                if docs.insert(doc_id.as_str(), *score).is_some() {
                    return Err(Error::DuplicateRunEntry(
                        list.query_id.clone(),
                        doc_id.clone(),
                    ));
                }
            }
        }
        lookups.push(lookup);
    }

    let all_queries: BTreeSet<&str> = lookups
        .iter()
        .flat_map(|l| l.keys().copied())
        .collect();

    let mut rows = BTreeMap::new();
    let mut normalization = BTreeMap::new();
    for qid in all_queries {
        let mut candidates: BTreeSet<&str> = BTreeSet::new();
        match policy {
            CandidatePolicy::Union => {
                for lookup in &lookups {
                    if let Some(docs) = lookup.get(qid) {
                        candidates.extend(docs.keys().copied());
                    }
                }
            }
            CandidatePolicy::Intersection => {
                let mut iter = lookups.iter();
                if let Some(first) = iter.next() {
                    candidates = first
                        .get(qid)
                        .map(|d| d.keys().copied().collect())
                        .unwrap_or_default();
                }
                for lookup in iter {
                    let docs: BTreeSet<&str> = lookup
                        .get(qid)
                        .map(|d| d.keys().copied().collect())
                        .unwrap_or_default();
                    candidates = candidates.intersection(&docs).copied().collect();
                }
            }
        }
        if candidates.is_empty() {
            continue;
        }

        let mut raw: Vec<Vec<Real>> = Vec::new();
        let mut ranges = Vec::new();
        for lookup in &lookups {
            let docs = lookup.get(qid);
            let present: Vec<Real> = docs
                .map(|d| d.values().copied().collect())
                .unwrap_or_default();
            let fill = present.iter().copied().fold(Real::INFINITY, Real::min);
            let fill = if fill.is_finite() { fill } else { 0.0 };
            let column: Vec<Real> = candidates
                .iter()
                .map(|doc| docs.and_then(|d| d.get(doc)).copied().unwrap_or(fill))
                .collect();
            let min = column.iter().copied().fold(Real::INFINITY, Real::min);
            let max = column.iter().copied().fold(Real::NEG_INFINITY, Real::max);
            ranges.push((min, max));
            let normalized = column
                .into_iter()
                .map(|v| if max > min { (v - min) / (max - min) } else { 0.5 })
                .collect();
            raw.push(normalized);
        }
        normalization.insert(qid.to_string(), ranges);
        for (i, doc) in candidates.iter().enumerate() {
            let feats: Vec<Real> = raw.iter().map(|col| col[i]).collect();
            rows.insert((qid.to_string(), doc.to_string()), feats);
        }
    }

    Ok(FeatureMatrix {
        feature_names: runs.iter().map(|(name, _)| name.clone()).collect(),
        rows,
        normalization,
    })
}

/// A linear scoring function over the feature columns, plus training
/// metadata.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinearRanker {
    pub weights: Vec<Real>,
    pub feature_names: Vec<String>,
    pub method: String,
    pub metric: String,
    pub restarts: usize,
    pub iterations: usize,
}

impl LinearRanker {
    pub fn score(&self, features: &[Real]) -> Real {
        self.weights.iter().zip(features).map(|(w, x)| w * x).sum()
    }
}

fn scored_run(weights: &[Real], features: &FeatureMatrix, tag: &str) -> TrecRun {
    let mut run = TrecRun::new(tag);
    for (qid, rows) in features.query_rows() {
        let entries: Vec<(String, Real)> = rows
            .iter()
            .map(|(doc, feats)| {
                let s: Real = weights.iter().zip(feats.iter()).map(|(w, x)| w * x).sum();
                (doc.to_string(), s)
            })
            .collect();
        let len = entries.len();
        run.lists.push(RankedList::new(qid, entries, len));
    }
    run
}

fn check_has_relevant(features: &FeatureMatrix, qrels: &Qrels) -> Result<()> {
    let any = features.rows.keys().any(|(qid, _)| {
        qrels
            .judgments
            .get(qid)
            .map(|docs| docs.values().any(|&r| r > 0))
            .unwrap_or(false)
    });
    if any {
        Ok(())
    } else {
        Err(Error::NoRelevantDocuments)
    }
}

fn l1_normalize(weights: &mut [Real]) {
    let norm: Real = weights.iter().map(|w| w.abs()).sum();
    if norm > 0.0 {
        for w in weights.iter_mut() {
            *w /= norm;
        }
    }
}

const LINE_SEARCH_DELTAS: [Real; 5] = [0.05, 0.1, 0.2, 0.5, 1.0];

#[derive(Debug, Clone)]
pub struct CoordinateAscentConfig {
    pub restarts: usize,
    pub tolerance: Real,
    pub seed: u64,
    pub max_cycles: usize,
}

impl Default for CoordinateAscentConfig {
    fn default() -> Self {
        CoordinateAscentConfig {
            restarts: 5,
            tolerance: 1e-5,
            seed: 42,
            max_cycles: 50,
        }
    }
}

/// Outcome of one restart: per-accepted-step training metric values.
pub type IterationLog = Vec<Real>;

/// Direct NDCG@10 maximization by cyclic coordinate line search, accept
/// only on strict improvement. The first restart starts from uniform
/// weights, the rest from seeded random vectors; the best restart's
/// weights are L1-normalized and returned with its iteration log.
pub fn coordinate_ascent(
    features: &FeatureMatrix,
    qrels: &Qrels,
    config: &CoordinateAscentConfig,
) -> Result<(LinearRanker, IterationLog)> {
    if features.num_features() == 0 || features.rows.is_empty() {
        return Err(Error::InvalidParam("empty feature matrix".into()));
    }
    check_has_relevant(features, qrels)?;

    let n = features.num_features();
    let objective =
        |w: &[Real]| -> Real { ndcg10(&scored_run(w, features, "ca"), qrels) };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(Real, Vec<Real>, IterationLog, usize)> = None;
    for restart in 0..config.restarts.max(1) {
        let mut weights: Vec<Real> = if restart == 0 {
            vec![1.0 / n as Real; n]
        } else {
            let mut w: Vec<Real> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            l1_normalize(&mut w);
            w
        };
        let mut current = objective(&weights);
        let mut log = vec![current];
        let mut cycles = 0;
        loop {
            let cycle_start = current;
            for i in 0..n {
                // grid pass: best signed delta around the current weight
                let mut accepted = None;
                for &delta in &LINE_SEARCH_DELTAS {
                    for sign in [1.0, -1.0] {
                        let mut cand = weights.clone();
                        cand[i] += sign * delta;
                        let value = objective(&cand);
                        if value > current
                            && accepted.as_ref().map(|&(v, _)| value > v).unwrap_or(true)
                        {
                            accepted = Some((value, sign * delta));
                        }
                    }
                }
                if let Some((value, delta)) = accepted {
                    weights[i] += delta;
                    current = value;
                    log.push(current);
                    // refine: halve the winning step while it still helps
                    let mut step = delta / 2.0;
                    for _ in 0..10 {
                        let mut cand = weights.clone();
                        cand[i] += step;
                        let value = objective(&cand);
                        if value > current {
                            weights = cand;
                            current = value;
                            log.push(current);
                        }
                        step /= 2.0;
                    }
                }
            }
            cycles += 1;
            if current - cycle_start < config.tolerance || cycles >= config.max_cycles {
                break;
            }
        }
        let better = best
            .as_ref()
            .map(|(v, ..)| current > *v)
            .unwrap_or(true);
        if better {
            best = Some((current, weights, log, cycles));
        }
    }

    let (_, mut weights, log, cycles) = best.unwrap();
    l1_normalize(&mut weights);
    Ok((
        LinearRanker {
            weights,
            feature_names: features.feature_names.clone(),
            method: "coordinate_ascent".to_string(),
            metric: "ndcg_cut_10".to_string(),
            restarts: config.restarts.max(1),
            iterations: cycles,
        },
        log,
    ))
}

#[derive(Debug, Clone)]
pub struct RankNetConfig {
    pub lr: Real,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for RankNetConfig {
    fn default() -> Self {
        RankNetConfig {
            lr: 1e-3,
            epochs: 100,
            seed: 42,
        }
    }
}

/// Preference pairs within each query: (preferred row, other row) for
/// every pair with a strictly higher relevance grade.
fn preference_pairs<'a>(
    features: &'a FeatureMatrix,
    qrels: &Qrels,
) -> Vec<(&'a [Real], &'a [Real])> {
    let mut pairs = Vec::new();
    for (qid, rows) in features.query_rows() {
        let graded: Vec<(i32, &[Real])> = rows
            .iter()
            .map(|(doc, feats)| (qrels.grade(qid, doc), *feats))
            .collect();
        for (rel_i, x_i) in &graded {
            for (rel_j, x_j) in &graded {
                if rel_i > rel_j {
                    pairs.push((*x_i, *x_j));
                }
            }
        }
    }
    pairs
}

/// Mean pairwise logistic loss ln(1 + exp(-(s_i - s_j))) over the
/// preference pairs, for a linear scorer.
pub fn ranknet_loss(weights: &[Real], pairs: &[(&[Real], &[Real])]) -> Real {
    let total: Real = pairs
        .iter()
        .map(|(xi, xj)| {
            let margin: Real = weights
                .iter()
                .zip(xi.iter().zip(xj.iter()))
                .map(|(w, (a, b))| w * (a - b))
                .sum();
            (1.0 + (-margin).exp()).ln()
        })
        .sum();
    total / pairs.len() as Real
}

/// Full-batch gradient descent on the RankNet loss with a linear scorer
/// initialized at zero. Deterministic: the data order is fixed and the
/// seed is recorded but unused by the optimizer.
pub fn ranknet_train(
    features: &FeatureMatrix,
    qrels: &Qrels,
    config: &RankNetConfig,
) -> Result<(LinearRanker, Vec<Real>)> {
    let pairs = preference_pairs(features, qrels);
    if pairs.is_empty() {
        return Err(Error::NoPreferencePairs);
    }
    let n = features.num_features();
    let mut weights = vec![0.0; n];
    let mut losses = vec![ranknet_loss(&weights, &pairs)];
    for _ in 0..config.epochs {
        let mut grad = vec![0.0; n];
        for (xi, xj) in &pairs {
            let margin: Real = weights
                .iter()
                .zip(xi.iter().zip(xj.iter()))
                .map(|(w, (a, b))| w * (a - b))
                .sum();
            // d/dw ln(1+exp(-m)) = -sigmoid(-m) * dm/dw
            let coeff = -1.0 / (1.0 + margin.exp());
            for ((g, a), b) in grad.iter_mut().zip(xi.iter()).zip(xj.iter()) {
                *g += coeff * (a - b);
            }
        }
        let scale = config.lr / pairs.len() as Real;
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= scale * g;
        }
        losses.push(ranknet_loss(&weights, &pairs));
    }
    Ok((
        LinearRanker {
            weights,
            feature_names: features.feature_names.clone(),
            method: "ranknet".to_string(),
            metric: "pairwise_logistic".to_string(),
            restarts: 1,
            iterations: config.epochs,
        },
        losses,
    ))
}

/// Score every candidate with the ranker; the run tag records the
/// training method and metric.
pub fn ensemble_score(ranker: &LinearRanker, features: &FeatureMatrix) -> Result<TrecRun> {
    if ranker.weights.len() != features.num_features() {
        return Err(Error::InvalidParam(format!(
            "ranker has {} weights but the matrix has {} features",
            ranker.weights.len(),
            features.num_features()
        )));
    }
    let tag = format!("ensemble-{}-{}", ranker.method, ranker.metric);
    Ok(scored_run(&ranker.weights, features, &tag))
}

/// Export as `query_id<TAB>doc_id<TAB>f1...fn` with a header row naming
/// the features.
pub fn write_features(features: &FeatureMatrix, mut out: impl Write) -> Result<()> {
    let io_err = |e| Error::io("<feature matrix>", e);
    write!(out, "query_id\tdoc_id").map_err(io_err)?;
    for name in &features.feature_names {
        write!(out, "\t{name}").map_err(io_err)?;
    }
    writeln!(out).map_err(io_err)?;
    for ((qid, did), feats) in &features.rows {
        write!(out, "{qid}\t{did}").map_err(io_err)?;
        for v in feats {
            write!(out, "\t{v:.6}").map_err(io_err)?;
        }
        writeln!(out).map_err(io_err)?;
    }
    Ok(())
}

pub fn write_features_file(features: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path_str = path.as_ref().display().to_string();
    let file = File::create(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    write_features(features, file)
}

/// Read a feature matrix previously written by `write_features`. The
/// normalization record is not serialized; imported matrices carry an
/// empty one.
pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::io(&path_str, e))?,
        None => return Err(Error::parse(&path_str, 1, "missing header row")),
    };
    let mut cols = header.split('\t');
    if cols.next() != Some("query_id") || cols.next() != Some("doc_id") {
        return Err(Error::parse(&path_str, 1, "header must start with query_id<TAB>doc_id"));
    }
    let feature_names: Vec<String> = cols.map(str::to_string).collect();
    if feature_names.is_empty() {
        return Err(Error::parse(&path_str, 1, "header names no features"));
    }

    let mut rows = BTreeMap::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(&path_str, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != feature_names.len() + 2 {
            return Err(Error::parse(
                &path_str,
                idx + 1,
                format!("expected {} fields, found {}", feature_names.len() + 2, fields.len()),
            ));
        }
        let feats: Vec<Real> = fields[2..]
            .iter()
            .map(|f| {
                f.parse().map_err(|_| {
                    Error::parse(&path_str, idx + 1, format!("bad feature value `{f}`"))
                })
            })
            .collect::<Result<_>>()?;
        let key = (fields[0].to_string(), fields[1].to_string());
        if rows.insert(key, feats).is_some() {
            return Err(Error::DuplicateRunEntry(
                fields[0].to_string(),
                fields[1].to_string(),
            ));
        }
    }
    Ok(FeatureMatrix {
        feature_names,
        rows,
        normalization: BTreeMap::new(),
    })
}

const RANKER_VERSION: u32 = 1;

#[derive(serde::Serialize, serde::Deserialize)]
struct RankerCheckpoint {
    version: u32,
    ranker: LinearRanker,
}

pub fn save_ranker(ranker: &LinearRanker, path: impl AsRef<Path>) -> Result<()> {
    let path_str = path.as_ref().display().to_string();
    let file = File::create(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    serde_json::to_writer_pretty(
        file,
        &RankerCheckpoint {
            version: RANKER_VERSION,
            ranker: ranker.clone(),
        },
    )?;
    Ok(())
}

pub fn load_ranker(path: impl AsRef<Path>) -> Result<LinearRanker> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    #[derive(serde::Deserialize)]
    struct VersionOnly {
        version: u32,
    }
    let bytes = std::io::read_to_string(file).map_err(|e| Error::io(&path_str, e))?;
    let peek: VersionOnly = serde_json::from_str(&bytes)?;
    if peek.version != RANKER_VERSION {
        return Err(Error::ModelVersion {
            found: peek.version,
            expected: RANKER_VERSION,
        });
    }
    let checkpoint: RankerCheckpoint = serde_json::from_str(&bytes)?;
    Ok(checkpoint.ranker)
}
