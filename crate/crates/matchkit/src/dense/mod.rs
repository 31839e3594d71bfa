//! Static word embeddings and an exact brute-force dense retriever over
//! pooled document vectors.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::index::FieldPolicy;
use crate::run::RankedList;
use crate::scalar::{cosine, dot, Scalar};
use crate::text::{Document, TokenizerConfig};
use crate::Real;

/// token -> dense vector. Unknown tokens resolve to the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore<S: Scalar = Real> {
    pub dim: usize,
    pub table: HashMap<String, Vec<S>>,
    /// duplicate tokens seen while loading (last occurrence wins)
    pub duplicate_count: usize,
}

impl<S: Scalar> EmbeddingStore<S> {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            table: HashMap::new(),
            duplicate_count: 0,
        }
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<S>) {
        assert_eq!(vector.len(), self.dim, "vector length must equal dim");
        if self.table.insert(token.into(), vector).is_some() {
            self.duplicate_count += 1;
        }
    }

    /// Vector for a token under the zero-vector OOV policy.
    pub fn lookup(&self, token: &str) -> Vec<S> {
        self.table
            .get(token)
            .cloned()
            .unwrap_or_else(|| vec![S::zero(); self.dim])
    }

    pub fn get(&self, token: &str) -> Option<&[S]> {
        self.table.get(token).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// Parse word2vec text format: header `vocab_size dim`, then one
/// `token v1 ... v_dim` per line. Duplicate tokens: last wins, counted.
pub fn load_embeddings<S: Scalar>(path: impl AsRef<Path>) -> Result<EmbeddingStore<S>> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(&path_str, 1, "missing header line"))?;
    let header = header.map_err(|e| Error::io(&path_str, e))?;
    let mut parts = header.split_whitespace();
    let vocab_size: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(&path_str, 1, "invalid vocab size in header"))?;
    let dim: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(&path_str, 1, "invalid dim in header"))?;
    if dim == 0 {
        return Err(Error::parse(&path_str, 1, "dim must be > 0"));
    }

    let mut store = EmbeddingStore::new(dim);
    let mut parsed = 0usize;
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(&path_str, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap();
        let values: std::result::Result<Vec<S>, _> = parts
            .map(|v| v.parse::<f64>().map(S::of))
            .collect();
        let values = values.map_err(|_| {
            Error::parse(&path_str, idx + 1, "non-numeric embedding value")
        })?;
        if values.len() != dim {
            return Err(Error::parse(
                &path_str,
                idx + 1,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        store.insert(token, values);
        parsed += 1;
    }
    if parsed != vocab_size {
        return Err(Error::parse(
            &path_str,
            1,
            format!("header declares {vocab_size} vectors, file has {parsed}"),
        ));
    }
    Ok(store)
}

/// Mean of the in-vocabulary token vectors; all-OOV or empty input gives
/// the zero vector.
pub fn encode_avg<S: Scalar>(tokens: &[String], store: &EmbeddingStore<S>) -> Vec<S> {
    let mut sum = vec![S::zero(); store.dim];
    let mut count = 0usize;
    for token in tokens {
        if let Some(vector) = store.get(token) {
            for (s, &v) in sum.iter_mut().zip(vector) {
                *s = *s + v;
            }
            count += 1;
        }
    }
    if count > 0 {
        let n = S::of(count as f64);
        for s in &mut sum {
            *s = *s / n;
        }
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DenseMetric {
    Dot,
    Cosine,
}

/// Pooled document vectors for exact dense retrieval.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDocMatrix<S: Scalar = Real> {
    pub doc_ids: Vec<String>,
    pub vectors: Vec<Vec<S>>,
    pub metric: DenseMetric,
    pub dim: usize,
}

/// Encode every document by averaging its token embeddings.
pub fn build_dense<S: Scalar>(
    docs: &[Document],
    store: &EmbeddingStore<S>,
    config: &TokenizerConfig,
    field_policy: FieldPolicy,
    metric: DenseMetric,
) -> DenseDocMatrix<S> {
    let mut doc_ids = Vec::with_capacity(docs.len());
    let mut vectors = Vec::with_capacity(docs.len());
    for doc in docs {
        let tokens = crate::index::index_tokens(doc, config, field_policy);
        doc_ids.push(doc.doc_id.clone());
        vectors.push(encode_avg(&tokens, store));
    }
    DenseDocMatrix {
        doc_ids,
        vectors,
        metric,
        dim: store.dim,
    }
}

/// Exhaustive top-k retrieval under the matrix's metric. Cosine with a
/// zero vector on either side is 0.
pub fn dense_retrieve<S: Scalar>(
    query_id: &str,
    query_vector: &[S],
    matrix: &DenseDocMatrix<S>,
    k: usize,
) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::InvalidParam("retrieval depth k must be > 0".into()));
    }
    if query_vector.len() != matrix.dim {
        return Err(Error::DimMismatch {
            query: query_vector.len(),
            matrix: matrix.dim,
        });
    }
    let entries: Vec<(String, Real)> = matrix
        .doc_ids
        .iter()
        .zip(&matrix.vectors)
        .map(|(doc_id, doc_vector)| {
            let score = match matrix.metric {
                DenseMetric::Dot => dot(query_vector, doc_vector),
                DenseMetric::Cosine => cosine(query_vector, doc_vector),
            };
            (doc_id.clone(), score.to_f64().unwrap_or(0.0))
        })
        .collect();
    Ok(RankedList::new(query_id, entries, k))
}
