//! Kernel-pooling neural reranking: translation matrices, RBF kernel
//! banks, K-NRM and Conv-KNRM scoring with hand-written reverse passes,
//! and point-wise / pair-wise training.

#[cfg(test)]
mod gradcheck;
mod checkpoint;
mod convknrm;
mod knrm;
mod rerank;
pub(crate) mod train;

pub use checkpoint::{load_model, save_model};
pub use convknrm::{ConvGrads, ConvKnrmModel, FilterBank};
pub use knrm::{KnrmModel, RankingGrads};
pub use rerank::{rerank, TokenizedCollection};
pub use train::{
    backward, load_pointwise_labels, load_triples, pairwise_accuracy, train, train_step,
    validate, weighted_train_step, EpochStats, LabeledPair, LossConfig, Model, ModelGrads,
    Optimizer, OptimizerConfig, TrainHistory, TrainSet, TrainableFlags, TrainingConfig, Triple,
    ValidationSet,
};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::{cosine, Scalar};
use crate::Real;

/// Log guard for kernel pooling.
pub const DEFAULT_LOG_GUARD: Real = 1e-10;

/// RBF kernel bank: means and widths.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KernelBank {
    pub mu: Vec<Real>,
    pub sigma: Vec<Real>,
}

impl KernelBank {
    pub fn new(mu: Vec<Real>, sigma: Vec<Real>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::InvalidParam("kernel mu/sigma length mismatch".into()));
        }
        if sigma.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParam("kernel sigma must be > 0".into()));
        }
        if mu.iter().any(|&m| !(-1.0..=1.0).contains(&m)) {
            return Err(Error::InvalidParam("kernel mu must be in [-1, 1]".into()));
        }
        Ok(KernelBank { mu, sigma })
    }

    /// One exact-match kernel (mu=1, sigma=1e-3) plus ten soft-match
    /// kernels at mu in {0.9, 0.7, ..., -0.9} with sigma=0.1.
    pub fn standard() -> Self {
        let mut mu = vec![1.0];
        let mut sigma = vec![1e-3];
        for k in 0..10 {
            // 0.9, 0.7, ..., -0.9 on an exact decimal grid so the values
            // survive text serialization bit-for-bit.
            mu.push((9 - 2 * k) as Real / 10.0);
            sigma.push(0.1);
        }
        KernelBank { mu, sigma }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

/// Token embeddings owned by a model. Ordered by token so parameter
/// flattening and serialization are deterministic.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Embeddings {
    pub dim: usize,
    pub table: BTreeMap<String, Vec<Real>>,
}

impl Embeddings {
    pub fn from_store(store: &crate::dense::EmbeddingStore<Real>) -> Self {
        Embeddings {
            dim: store.dim,
            table: store.table.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        }
    }

    /// Zero vector for unknown tokens.
    pub fn lookup(&self, token: &str) -> Vec<Real> {
        self.table
            .get(token)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.dim])
    }

    pub fn embed_sequence(&self, tokens: &[String]) -> Vec<Vec<Real>> {
        tokens.iter().map(|t| self.lookup(t)).collect()
    }
}

/// Pairwise cosine similarities between query and document token
/// vectors. Errors on an empty side (degenerate pair).
pub fn translation_matrix<S: Scalar>(
    q_vectors: &[Vec<S>],
    d_vectors: &[Vec<S>],
) -> Result<Vec<Vec<S>>> {
    if q_vectors.is_empty() || d_vectors.is_empty() {
        return Err(Error::DegeneratePair(format!(
            "{} query vectors, {} document vectors",
            q_vectors.len(),
            d_vectors.len()
        )));
    }
    Ok(q_vectors
        .iter()
        .map(|q| d_vectors.iter().map(|d| cosine(q, d)).collect())
        .collect())
}

/// Soft-match counts per kernel per query row.
/// kernel_row[k][i] = sum_j exp(-(M_ij - mu_k)^2 / (2 sigma_k^2))
pub fn kernel_rows(matrix: &[Vec<Real>], kernels: &KernelBank) -> Vec<Vec<Real>> {
    kernels
        .mu
        .iter()
        .zip(&kernels.sigma)
        .map(|(&mu, &sigma)| {
            matrix
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&m| (-(m - mu).powi(2) / (2.0 * sigma * sigma)).exp())
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Log-sum pooling: phi_k = sum_i ln(max(row_count, eps)).
pub fn kernel_pool(matrix: &[Vec<Real>], kernels: &KernelBank, eps: Real) -> Vec<Real> {
    kernel_rows(matrix, kernels)
        .iter()
        .map(|rows| rows.iter().map(|&c| c.max(eps).ln()).sum())
        .collect()
}
