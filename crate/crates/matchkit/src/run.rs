//! Ranked result lists and the TREC run exchange format.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::Real;

/// Order scored documents: score descending, ties broken by doc_id
/// descending (lexicographic). This mirrors the reference TREC
/// evaluator's re-sort so metric values are stable.
pub fn rank_order(a: &(String, Real), b: &(String, Real)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| b.0.cmp(&a.0))
}

/// Sort entries in rank order and truncate to the top `k`.
pub fn sort_and_truncate(entries: &mut Vec<(String, Real)>, k: usize) {
    entries.sort_by(rank_order);
    entries.truncate(k);
}

/// A single query's ranked results.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    /// (doc_id, score), sorted by [`rank_order`], no duplicate doc ids.
    pub entries: Vec<(String, Real)>,
}

impl RankedList {
    pub fn new(query_id: impl Into<String>, mut entries: Vec<(String, Real)>, k: usize) -> Self {
        sort_and_truncate(&mut entries, k);
        RankedList {
            query_id: query_id.into(),
            entries,
        }
    }
}

/// A full run: one ranked list per query, in query order, plus a tag.
#[derive(Debug, Clone, PartialEq)]
pub struct TrecRun {
    pub tag: String,
    pub lists: Vec<RankedList>,
}

impl TrecRun {
    pub fn new(tag: impl Into<String>) -> Self {
        TrecRun {
            tag: tag.into(),
            lists: Vec::new(),
        }
    }

    pub fn list(&self, query_id: &str) -> Option<&RankedList> {
        self.lists.iter().find(|l| l.query_id == query_id)
    }

    /// Serialize as `query_id Q0 doc_id rank score tag`, rank starting at 1.
    pub fn write(&self, mut writer: impl Write) -> std::io::Result<()> {
        for list in &self.lists {
            for (rank, (doc_id, score)) in list.entries.iter().enumerate() {
                writeln!(
                    writer,
                    "{} Q0 {} {} {:.6} {}",
                    list.query_id,
                    doc_id,
                    rank + 1,
                    score,
                    self.tag
                )?;
            }
        }
        Ok(())
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path_str = path.as_ref().display().to_string();
        let file = File::create(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
        let mut writer = std::io::BufWriter::new(file);
        self.write(&mut writer).map_err(|e| Error::io(&path_str, e))
    }
}

/// Parse a TREC run file. Declared ranks are ignored; entries are
/// re-sorted per query by score then doc_id, as the reference tool does.
pub fn parse_run(path: impl AsRef<Path>) -> Result<TrecRun> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    let mut run = TrecRun::new("parsed");
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut tag: Option<String> = None;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path_str, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                &path_str,
                idx + 1,
                format!("expected 6 whitespace-separated fields, found {}", fields.len()),
            ));
        }
        let query_id = fields[0];
        let doc_id = fields[2];
        let score: Real = fields[4].parse().map_err(|_| {
            Error::parse(&path_str, idx + 1, format!("invalid score `{}`", fields[4]))
        })?;
        if !seen.insert((query_id.to_string(), doc_id.to_string())) {
            return Err(Error::DuplicateRunEntry(
                query_id.to_string(),
                doc_id.to_string(),
            ));
        }
        tag.get_or_insert_with(|| fields[5].to_string());
        match run.lists.iter_mut().find(|l| l.query_id == query_id) {
            Some(list) => list.entries.push((doc_id.to_string(), score)),
            None => run.lists.push(RankedList {
                query_id: query_id.to_string(),
                entries: vec![(doc_id.to_string(), score)],
            }),
        }
    }
    for list in &mut run.lists {
        list.entries.sort_by(rank_order);
    }
    if let Some(tag) = tag {
        run.tag = tag;
    }
    Ok(run)
}
