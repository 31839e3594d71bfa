//! TREC-style evaluation: qrels parsing, NDCG@k, MAP, MRR@k, P@k, and
//! per-query / aggregate reporting in the reference tool's layout.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::run::{RankedList, TrecRun};
use crate::Real;

/// Graded relevance judgments. Negative grades are stored as given and
/// clamped to 0 when metrics are computed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    /// query_id -> doc_id -> grade
    pub judgments: BTreeMap<String, BTreeMap<String, i32>>,
}

impl Qrels {
    pub fn grade(&self, query_id: &str, doc_id: &str) -> i32 {
        self.judgments
            .get(query_id)
            .and_then(|docs| docs.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn is_judged_query(&self, query_id: &str) -> bool {
        self.judgments.contains_key(query_id)
    }

    /// Grades > 0 for a query, for ideal-ranking computations.
    fn positive_grades(&self, query_id: &str) -> Vec<i32> {
        self.judgments
            .get(query_id)
            .map(|docs| docs.values().copied().filter(|&g| g > 0).collect())
            .unwrap_or_default()
    }
}

/// Parse `query_id 0 doc_id grade` (whitespace-separated; field 2 ignored).
pub fn parse_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    let mut qrels = Qrels::default();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path_str, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                &path_str,
                idx + 1,
                format!("expected 4 whitespace-separated fields, found {}", fields.len()),
            ));
        }
        let grade: i32 = fields[3].parse().map_err(|_| {
            Error::parse(&path_str, idx + 1, format!("invalid grade `{}`", fields[3]))
        })?;
        let docs = qrels.judgments.entry(fields[0].to_string()).or_default();
        if docs.insert(fields[2].to_string(), grade).is_some() {
            return Err(Error::parse(
                &path_str,
                idx + 1,
                format!("duplicate judgment for doc `{}`", fields[2]),
            ));
        }
    }
    Ok(qrels)
}

/// Per-query values for one metric plus their mean over evaluated
/// queries. Queries absent from the qrels are not evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: String,
    pub per_query: BTreeMap<String, Real>,
    pub aggregate: Real,
    pub evaluated_query_count: usize,
}

impl MetricReport {
    fn from_per_query(metric: impl Into<String>, per_query: BTreeMap<String, Real>) -> Self {
        let count = per_query.len();
        let aggregate = if count == 0 {
            0.0
        } else {
            per_query.values().sum::<Real>() / count as Real
        };
        MetricReport {
            metric: metric.into(),
            per_query,
            aggregate,
            evaluated_query_count: count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NdcgGain {
    /// gain 2^rel - 1 (the reference tool's ndcg_cut)
    Exponential,
    /// gain rel
    Linear,
}

fn gain(grade: i32, variant: NdcgGain) -> Real {
    let rel = grade.max(0) as Real;
    match variant {
        NdcgGain::Exponential => (2.0_f64).powf(rel) - 1.0,
        NdcgGain::Linear => rel,
    }
}

fn dcg(grades: &[i32], k: usize, variant: NdcgGain) -> Real {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g, variant) / ((i + 2) as Real).log2())
        .sum()
}

fn query_grades(list: &RankedList, qrels: &Qrels) -> Vec<i32> {
    list.entries
        .iter()
        .map(|(doc_id, _)| qrels.grade(&list.query_id, doc_id))
        .collect()
}

/// Queries judged in the qrels, with their (possibly empty) ranked lists.
fn evaluated_lists<'a>(run: &'a TrecRun, qrels: &Qrels) -> Vec<(&'a str, Vec<i32>)> {
    run.lists
        .iter()
        .filter(|l| qrels.is_judged_query(&l.query_id))
        .map(|l| (l.query_id.as_str(), query_grades(l, qrels)))
        .collect()
}

pub fn ndcg_at_k(run: &TrecRun, qrels: &Qrels, k: usize, variant: NdcgGain) -> Result<MetricReport> {
    if k == 0 {
        return Err(Error::InvalidParam("ndcg cutoff k must be > 0".into()));
    }
    let mut per_query = BTreeMap::new();
    for (query_id, grades) in evaluated_lists(run, qrels) {
        let mut ideal = qrels.positive_grades(query_id);
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg = dcg(&ideal, k, variant);
        let value = if idcg > 0.0 {
            dcg(&grades, k, variant) / idcg
        } else {
            0.0
        };
        per_query.insert(query_id.to_string(), value);
    }
    Ok(MetricReport::from_per_query(format!("ndcg_cut_{k}"), per_query))
}

pub fn map(run: &TrecRun, qrels: &Qrels) -> Result<MetricReport> {
    let mut per_query = BTreeMap::new();
    for (query_id, grades) in evaluated_lists(run, qrels) {
        let num_relevant = qrels.positive_grades(query_id).len();
        let value = if num_relevant == 0 {
            0.0
        } else {
            let mut hits = 0usize;
            let mut sum = 0.0;
            for (i, &g) in grades.iter().enumerate() {
                if g > 0 {
                    hits += 1;
                    sum += hits as Real / (i + 1) as Real;
                }
            }
            sum / num_relevant as Real
        };
        per_query.insert(query_id.to_string(), value);
    }
    Ok(MetricReport::from_per_query("map", per_query))
}

pub fn mrr_at_k(run: &TrecRun, qrels: &Qrels, k: usize) -> Result<MetricReport> {
    if k == 0 {
        return Err(Error::InvalidParam("mrr cutoff k must be > 0".into()));
    }
    let mut per_query = BTreeMap::new();
    for (query_id, grades) in evaluated_lists(run, qrels) {
        let value = grades
            .iter()
            .take(k)
            .position(|&g| g > 0)
            .map(|i| 1.0 / (i + 1) as Real)
            .unwrap_or(0.0);
        per_query.insert(query_id.to_string(), value);
    }
    Ok(MetricReport::from_per_query(format!("recip_rank_{k}"), per_query))
}

pub fn precision_at_k(run: &TrecRun, qrels: &Qrels, k: usize) -> Result<MetricReport> {
    if k == 0 {
        return Err(Error::InvalidParam("precision cutoff k must be > 0".into()));
    }
    let mut per_query = BTreeMap::new();
    for (query_id, grades) in evaluated_lists(run, qrels) {
        let hits = grades.iter().take(k).filter(|&&g| g > 0).count();
        per_query.insert(query_id.to_string(), hits as Real / k as Real);
    }
    Ok(MetricReport::from_per_query(format!("P_{k}"), per_query))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricSpec {
    Ndcg { k: usize, gain: NdcgGain },
    Map,
    Mrr { k: usize },
    Precision { k: usize },
}

impl MetricSpec {
    /// Parse names like `ndcg_cut_10`, `map`, `recip_rank_10`, `P_5`.
    pub fn parse(name: &str) -> Result<Self> {
        if name == "map" {
            return Ok(MetricSpec::Map);
        }
        if let Some(k) = name.strip_prefix("ndcg_cut_") {
            let k = k
                .parse()
                .map_err(|_| Error::Config(format!("bad metric `{name}`")))?;
            return Ok(MetricSpec::Ndcg {
                k,
                gain: NdcgGain::Exponential,
            });
        }
        if let Some(k) = name.strip_prefix("recip_rank_") {
            let k = k
                .parse()
                .map_err(|_| Error::Config(format!("bad metric `{name}`")))?;
            return Ok(MetricSpec::Mrr { k });
        }
        if name == "recip_rank" {
            return Ok(MetricSpec::Mrr { k: usize::MAX });
        }
        if let Some(k) = name.strip_prefix("P_") {
            let k = k
                .parse()
                .map_err(|_| Error::Config(format!("bad metric `{name}`")))?;
            return Ok(MetricSpec::Precision { k });
        }
        Err(Error::Config(format!("unknown metric `{name}`")))
    }

    pub fn compute(&self, run: &TrecRun, qrels: &Qrels) -> Result<MetricReport> {
        match *self {
            MetricSpec::Ndcg { k, gain } => ndcg_at_k(run, qrels, k, gain),
            MetricSpec::Map => map(run, qrels),
            MetricSpec::Mrr { k } => mrr_at_k(run, qrels, k),
            MetricSpec::Precision { k } => precision_at_k(run, qrels, k),
        }
    }
}

/// Evaluate several metrics at once.
pub fn evaluate(run: &TrecRun, qrels: &Qrels, specs: &[MetricSpec]) -> Result<Vec<MetricReport>> {
    if specs.is_empty() {
        return Err(Error::InvalidParam("empty metric list".into()));
    }
    specs.iter().map(|s| s.compute(run, qrels)).collect()
}

/// Emit reports as `metric query_id value` rows plus a `metric all value`
/// aggregate row per metric.
pub fn write_report(reports: &[MetricReport], mut writer: impl Write) -> std::io::Result<()> {
    for report in reports {
        for (query_id, value) in &report.per_query {
            writeln!(writer, "{}\t{}\t{:.6}", report.metric, query_id, value)?;
        }
        writeln!(writer, "{}\tall\t{:.6}", report.metric, report.aggregate)?;
    }
    Ok(())
}

/// Convenience: NDCG@10 aggregate, the pipeline's primary validation
/// metric.
pub fn ndcg10(run: &TrecRun, qrels: &Qrels) -> Real {
    ndcg_at_k(run, qrels, 10, NdcgGain::Exponential)
        .expect("k=10 is valid")
        .aggregate
}

/// Check that every run scored the same candidate set (used by tests).
pub fn doc_sets_equal(a: &TrecRun, b: &TrecRun) -> bool {
    let collect = |run: &TrecRun| -> HashSet<(String, String)> {
        run.lists
            .iter()
            .flat_map(|l| {
                l.entries
                    .iter()
                    .map(move |(d, _)| (l.query_id.clone(), d.clone()))
            })
            .collect()
    };
    collect(a) == collect(b)
}
