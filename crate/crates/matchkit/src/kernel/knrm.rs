use std::collections::BTreeMap;

use crate::error::Result;
use crate::Real;

use super::{kernel_rows, translation_matrix, Embeddings, KernelBank, DEFAULT_LOG_GUARD};

/// K-NRM: translation matrix over token embeddings, RBF kernel pooling,
/// linear ranking layer, tanh squashing.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KnrmModel {
    pub embeddings: Embeddings,
    pub kernels: KernelBank,
    pub w: Vec<Real>,
    pub b: Real,
    pub log_guard: Real,
    pub max_q_len: usize,
    pub max_d_len: usize,
}

/// Forward activations kept for the reverse pass.
pub(crate) struct KnrmForward {
    pub q_tokens: Vec<String>,
    pub d_tokens: Vec<String>,
    pub q_vectors: Vec<Vec<Real>>,
    pub d_vectors: Vec<Vec<Real>>,
    pub matrix: Vec<Vec<Real>>,
    /// kernel_counts[k][i]
    pub kernel_counts: Vec<Vec<Real>>,
    pub phi: Vec<Real>,
    pub score: Real,
}

/// Accumulated gradients for one model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankingGrads {
    pub w: Vec<Real>,
    pub b: Real,
    pub embeddings: BTreeMap<String, Vec<Real>>,
}

impl KnrmModel {
    pub fn new(embeddings: Embeddings, kernels: KernelBank) -> Self {
        let k = kernels.len();
        KnrmModel {
            embeddings,
            kernels,
            w: vec![0.0; k],
            b: 0.0,
            log_guard: DEFAULT_LOG_GUARD,
            max_q_len: 32,
            max_d_len: 256,
        }
    }

    pub(crate) fn truncate<'a>(&self, q: &'a [String], d: &'a [String]) -> (&'a [String], &'a [String]) {
        let q = &q[..q.len().min(self.max_q_len)];
        let d = &d[..d.len().min(self.max_d_len)];
        (q, d)
    }

    pub(crate) fn forward(&self, q_tokens: &[String], d_tokens: &[String]) -> Result<KnrmForward> {
        let (q_tokens, d_tokens) = self.truncate(q_tokens, d_tokens);
        let q_vectors = self.embeddings.embed_sequence(q_tokens);
        let d_vectors = self.embeddings.embed_sequence(d_tokens);
        let matrix = translation_matrix(&q_vectors, &d_vectors)?;
        let kernel_counts = kernel_rows(&matrix, &self.kernels);
        let phi: Vec<Real> = kernel_counts
            .iter()
            .map(|rows| rows.iter().map(|&c| c.max(self.log_guard).ln()).sum())
            .collect();
        let z: Real = self.w.iter().zip(&phi).map(|(w, p)| w * p).sum::<Real>() + self.b;
        Ok(KnrmForward {
            q_tokens: q_tokens.to_vec(),
            d_tokens: d_tokens.to_vec(),
            q_vectors,
            d_vectors,
            matrix,
            kernel_counts,
            phi,
            score: z.tanh(),
        })
    }

    pub fn score(&self, q_tokens: &[String], d_tokens: &[String]) -> Result<Real> {
        Ok(self.forward(q_tokens, d_tokens)?.score)
    }

    pub fn phi(&self, q_tokens: &[String], d_tokens: &[String]) -> Result<Vec<Real>> {
        Ok(self.forward(q_tokens, d_tokens)?.phi)
    }

    /// Reverse pass for one scored pair: accumulate d(loss)/d(params)
    /// into `grads` given d(loss)/d(score).
    pub(crate) fn backward(
        &self,
        fwd: &KnrmForward,
        d_score: Real,
        train_embeddings: bool,
        grads: &mut RankingGrads,
    ) {
        if grads.w.is_empty() {
            grads.w = vec![0.0; self.w.len()];
        }
        let dz = d_score * (1.0 - fwd.score * fwd.score);
        for (gw, &p) in grads.w.iter_mut().zip(&fwd.phi) {
            *gw += dz * p;
        }
        grads.b += dz;

        // d(loss)/d(M): through ln(max(count, eps)) and the RBF kernels
        let mut d_matrix = vec![vec![0.0; fwd.d_vectors.len()]; fwd.q_vectors.len()];
        for (k, (&mu, &sigma)) in self.kernels.mu.iter().zip(&self.kernels.sigma).enumerate() {
            let d_phi = dz * self.w[k];
            if d_phi == 0.0 {
                continue;
            }
            let inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
            for (i, row) in fwd.matrix.iter().enumerate() {
                let count = fwd.kernel_counts[k][i];
                if count <= self.log_guard {
                    continue; // clamped: constant
                }
                let d_count = d_phi / count;
                for (j, &m) in row.iter().enumerate() {
                    let e = (-(m - mu) * (m - mu) * inv_two_sigma_sq).exp();
                    d_matrix[i][j] += d_count * e * (-(m - mu) / (sigma * sigma));
                }
            }
        }

        if train_embeddings {
            accumulate_cosine_grads(
                &fwd.q_tokens,
                &fwd.d_tokens,
                &fwd.q_vectors,
                &fwd.d_vectors,
                &fwd.matrix,
                &d_matrix,
                &self.embeddings,
                grads,
            );
        }
    }
}

/// Push translation-matrix gradients back to the embedding vectors.
/// Rows/columns with a zero vector are constants; tokens absent from the
/// embedding table receive no gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_cosine_grads(
    q_tokens: &[String],
    d_tokens: &[String],
    q_vectors: &[Vec<Real>],
    d_vectors: &[Vec<Real>],
    matrix: &[Vec<Real>],
    d_matrix: &[Vec<Real>],
    embeddings: &Embeddings,
    grads: &mut RankingGrads,
) {
    let dim = embeddings.dim;
    let q_norms: Vec<Real> = q_vectors.iter().map(|v| crate::scalar::norm(v)).collect();
    let d_norms: Vec<Real> = d_vectors.iter().map(|v| crate::scalar::norm(v)).collect();
    for (i, q_vec) in q_vectors.iter().enumerate() {
        if q_norms[i] == 0.0 {
            continue;
        }
        for (j, d_vec) in d_vectors.iter().enumerate() {
            if d_norms[j] == 0.0 {
                continue;
            }
            let dm = d_matrix[i][j];
            if dm == 0.0 {
                continue;
            }
            let c = matrix[i][j];
            let inv = 1.0 / (q_norms[i] * d_norms[j]);
            if embeddings.table.contains_key(&q_tokens[i]) {
                let gq = grads
                    .embeddings
                    .entry(q_tokens[i].clone())
                    .or_insert_with(|| vec![0.0; dim]);
                for t in 0..dim {
                    gq[t] += dm * (d_vec[t] * inv - c * q_vec[t] / (q_norms[i] * q_norms[i]));
                }
            }
            if embeddings.table.contains_key(&d_tokens[j]) {
                let gd = grads
                    .embeddings
                    .entry(d_tokens[j].clone())
                    .or_insert_with(|| vec![0.0; dim]);
                for t in 0..dim {
                    gd[t] += dm * (q_vec[t] * inv - c * d_vec[t] / (d_norms[j] * d_norms[j]));
                }
            }
        }
    }
}
