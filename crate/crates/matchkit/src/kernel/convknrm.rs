use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::Real;

use super::{translation_matrix, Embeddings, KernelBank, DEFAULT_LOG_GUARD};

/// One convolution bank: F filters over n-gram windows of the embedding
/// sequence. `weights[f]` has length n * dim (window-major layout),
/// ReLU activation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FilterBank {
    pub weights: Vec<Vec<Real>>,
    pub bias: Vec<Real>,
}

impl FilterBank {
    pub fn zeros(num_filters: usize, n: usize, dim: usize) -> Self {
        FilterBank {
            weights: vec![vec![0.0; n * dim]; num_filters],
            bias: vec![0.0; num_filters],
        }
    }

    pub fn num_filters(&self) -> usize {
        self.weights.len()
    }
}

/// Conv-KNRM: n-gram encodings via valid 1-D convolutions, cross-matched
/// translation matrices for every (query n-gram size, document n-gram
/// size) pair, kernel pooling, linear layer, tanh.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConvKnrmModel {
    pub embeddings: Embeddings,
    /// ascending n-gram sizes, default {1, 2, 3}
    pub sizes: Vec<usize>,
    pub filters: BTreeMap<usize, FilterBank>,
    pub kernels: KernelBank,
    /// length sizes^2 * K, ordered query-size major, document-size
    /// minor, kernel innermost
    pub w: Vec<Real>,
    pub b: Real,
    pub log_guard: Real,
    pub max_q_len: usize,
    pub max_d_len: usize,
}

pub(crate) struct GramLayer {
    /// pre-activation per position, length F
    pub pre: Vec<Vec<Real>>,
    /// ReLU output per position
    pub act: Vec<Vec<Real>>,
}

pub(crate) struct PairCache {
    pub nq: usize,
    pub nd: usize,
    /// None when either side has no n-grams (sentinel phi block)
    pub matched: Option<(Vec<Vec<Real>>, Vec<Vec<Real>>)>,
}

pub(crate) struct ConvForward {
    pub q_tokens: Vec<String>,
    pub d_tokens: Vec<String>,
    pub q_embedded: Vec<Vec<Real>>,
    pub d_embedded: Vec<Vec<Real>>,
    pub q_grams: BTreeMap<usize, GramLayer>,
    pub d_grams: BTreeMap<usize, GramLayer>,
    pub pairs: Vec<PairCache>,
    pub phi: Vec<Real>,
    pub score: Real,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvGrads {
    pub w: Vec<Real>,
    pub b: Real,
    pub filters: BTreeMap<usize, FilterBank>,
    pub embeddings: BTreeMap<String, Vec<Real>>,
}

impl ConvKnrmModel {
    pub fn new(
        embeddings: Embeddings,
        kernels: KernelBank,
        sizes: Vec<usize>,
        num_filters: usize,
    ) -> Result<Self> {
        if num_filters == 0 {
            return Err(Error::InvalidParam("filter count must be > 0".into()));
        }
        if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
            return Err(Error::InvalidParam(
                "n-gram sizes must be ascending and positive".into(),
            ));
        }
        let dim = embeddings.dim;
        let filters = sizes
            .iter()
            .map(|&n| (n, FilterBank::zeros(num_filters, n, dim)))
            .collect();
        let w_len = sizes.len() * sizes.len() * kernels.len();
        Ok(ConvKnrmModel {
            embeddings,
            sizes,
            filters,
            kernels,
            w: vec![0.0; w_len],
            b: 0.0,
            log_guard: DEFAULT_LOG_GUARD,
            max_q_len: 32,
            max_d_len: 256,
        })
    }

    /// Uniform(-scale, scale) filter initialization.
    pub fn randomize_filters(&mut self, rng: &mut impl Rng, scale: Real) {
        for bank in self.filters.values_mut() {
            for row in &mut bank.weights {
                for v in row.iter_mut() {
                    *v = rng.gen_range(-scale..scale);
                }
            }
            for v in &mut bank.bias {
                *v = rng.gen_range(-scale..scale);
            }
        }
    }

    fn convolve(&self, embedded: &[Vec<Real>], n: usize) -> GramLayer {
        let dim = self.embeddings.dim;
        let bank = &self.filters[&n];
        let num_positions = embedded.len().saturating_sub(n - 1);
        let mut pre = Vec::with_capacity(num_positions);
        let mut act = Vec::with_capacity(num_positions);
        for p in 0..num_positions {
            let mut pre_f = bank.bias.clone();
            for (f, weights) in bank.weights.iter().enumerate() {
                let mut acc = 0.0;
                for t in 0..n {
                    let x = &embedded[p + t];
                    let w = &weights[t * dim..(t + 1) * dim];
                    for k in 0..dim {
                        acc += w[k] * x[k];
                    }
                }
                pre_f[f] += acc;
            }
            act.push(pre_f.iter().map(|&v| v.max(0.0)).collect());
            pre.push(pre_f);
        }
        GramLayer { pre, act }
    }

    pub(crate) fn forward(&self, q_tokens: &[String], d_tokens: &[String]) -> Result<ConvForward> {
        let q_tokens = &q_tokens[..q_tokens.len().min(self.max_q_len)];
        let d_tokens = &d_tokens[..d_tokens.len().min(self.max_d_len)];
        if q_tokens.is_empty() || d_tokens.is_empty() {
            return Err(Error::DegeneratePair(format!(
                "{} query tokens, {} document tokens",
                q_tokens.len(),
                d_tokens.len()
            )));
        }
        let q_embedded = self.embeddings.embed_sequence(q_tokens);
        let d_embedded = self.embeddings.embed_sequence(d_tokens);
        let q_grams: BTreeMap<usize, GramLayer> = self
            .sizes
            .iter()
            .map(|&n| (n, self.convolve(&q_embedded, n)))
            .collect();
        let d_grams: BTreeMap<usize, GramLayer> = self
            .sizes
            .iter()
            .map(|&n| (n, self.convolve(&d_embedded, n)))
            .collect();

        let k = self.kernels.len();
        let mut phi = Vec::with_capacity(self.w.len());
        let mut pairs = Vec::new();
        for &nq in &self.sizes {
            for &nd in &self.sizes {
                let q_act = &q_grams[&nq].act;
                let d_act = &d_grams[&nd].act;
                if q_act.is_empty() || d_act.is_empty() {
                    // sequence shorter than n: sentinel block of K ln(eps)
                    phi.extend(std::iter::repeat(self.log_guard.ln()).take(k));
                    pairs.push(PairCache {
                        nq,
                        nd,
                        matched: None,
                    });
                    continue;
                }
                let matrix = translation_matrix(q_act, d_act)?;
                let counts = super::kernel_rows(&matrix, &self.kernels);
                for rows in &counts {
                    phi.push(rows.iter().map(|&c| c.max(self.log_guard).ln()).sum());
                }
                pairs.push(PairCache {
                    nq,
                    nd,
                    matched: Some((matrix, counts)),
                });
            }
        }
        let z: Real = self.w.iter().zip(&phi).map(|(w, p)| w * p).sum::<Real>() + self.b;
        Ok(ConvForward {
            q_tokens: q_tokens.to_vec(),
            d_tokens: d_tokens.to_vec(),
            q_embedded,
            d_embedded,
            q_grams,
            d_grams,
            pairs,
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

    pub(crate) fn backward(
        &self,
        fwd: &ConvForward,
        d_score: Real,
        train_filters: bool,
        train_embeddings: bool,
        grads: &mut ConvGrads,
    ) {
        if grads.w.is_empty() {
            grads.w = vec![0.0; self.w.len()];
        }
        let k = self.kernels.len();
        let dz = d_score * (1.0 - fwd.score * fwd.score);
        for (gw, &p) in grads.w.iter_mut().zip(&fwd.phi) {
            *gw += dz * p;
        }
        grads.b += dz;
        if !train_filters && !train_embeddings {
            return;
        }

        // accumulate gradients on the n-gram activation vectors
        let mut d_q_act: BTreeMap<usize, Vec<Vec<Real>>> = fwd
            .q_grams
            .iter()
            .map(|(&n, layer)| (n, layer.act.iter().map(|v| vec![0.0; v.len()]).collect()))
            .collect();
        let mut d_d_act: BTreeMap<usize, Vec<Vec<Real>>> = fwd
            .d_grams
            .iter()
            .map(|(&n, layer)| (n, layer.act.iter().map(|v| vec![0.0; v.len()]).collect()))
            .collect();

        for (pair_idx, pair) in fwd.pairs.iter().enumerate() {
            let Some((matrix, counts)) = &pair.matched else {
                continue; // sentinel block is constant
            };
            let q_act = &fwd.q_grams[&pair.nq].act;
            let d_act = &fwd.d_grams[&pair.nd].act;
            let q_norms: Vec<Real> = q_act.iter().map(|v| crate::scalar::norm(v)).collect();
            let d_norms: Vec<Real> = d_act.iter().map(|v| crate::scalar::norm(v)).collect();
            let dq = d_q_act.get_mut(&pair.nq).unwrap();
            let dd = d_d_act.get_mut(&pair.nd).unwrap();

            for (kk, (&mu, &sigma)) in self.kernels.mu.iter().zip(&self.kernels.sigma).enumerate() {
                let d_phi = dz * self.w[pair_idx * k + kk];
                if d_phi == 0.0 {
                    continue;
                }
                for (i, row) in matrix.iter().enumerate() {
                    let count = counts[kk][i];
                    if count <= self.log_guard {
                        continue;
                    }
                    let d_count = d_phi / count;
                    for (j, &m) in row.iter().enumerate() {
                        let e = (-(m - mu) * (m - mu) / (2.0 * sigma * sigma)).exp();
                        let dm = d_count * e * (-(m - mu) / (sigma * sigma));
                        if dm == 0.0 || q_norms[i] == 0.0 || d_norms[j] == 0.0 {
                            continue;
                        }
                        let inv = 1.0 / (q_norms[i] * d_norms[j]);
                        let c = m;
                        for t in 0..q_act[i].len() {
                            dq[i][t] +=
                                dm * (d_act[j][t] * inv - c * q_act[i][t] / (q_norms[i] * q_norms[i]));
                            dd[j][t] +=
                                dm * (q_act[i][t] * inv - c * d_act[j][t] / (d_norms[j] * d_norms[j]));
                        }
                    }
                }
            }
        }

        // through ReLU and the convolution, per side
        let mut d_q_embedded = vec![vec![0.0; self.embeddings.dim]; fwd.q_embedded.len()];
        let mut d_d_embedded = vec![vec![0.0; self.embeddings.dim]; fwd.d_embedded.len()];
        for &n in &self.sizes {
            self.conv_backward(
                &fwd.q_embedded,
                &fwd.q_grams[&n],
                &d_q_act[&n],
                n,
                train_filters,
                train_embeddings,
                grads,
                &mut d_q_embedded,
            );
            self.conv_backward(
                &fwd.d_embedded,
                &fwd.d_grams[&n],
                &d_d_act[&n],
                n,
                train_filters,
                train_embeddings,
                grads,
                &mut d_d_embedded,
            );
        }

        if train_embeddings {
            for (token, d_vec) in fwd
                .q_tokens
                .iter()
                .zip(&d_q_embedded)
                .chain(fwd.d_tokens.iter().zip(&d_d_embedded))
            {
                if !self.embeddings.table.contains_key(token) {
                    continue;
                }
                let g = grads
                    .embeddings
                    .entry(token.clone())
                    .or_insert_with(|| vec![0.0; self.embeddings.dim]);
                for (gt, &dv) in g.iter_mut().zip(d_vec) {
                    *gt += dv;
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_backward(
        &self,
        embedded: &[Vec<Real>],
        layer: &GramLayer,
        d_act: &[Vec<Real>],
        n: usize,
        train_filters: bool,
        train_embeddings: bool,
        grads: &mut ConvGrads,
        d_embedded: &mut [Vec<Real>],
    ) {
        let dim = self.embeddings.dim;
        let bank = &self.filters[&n];
        let g_bank = grads
            .filters
            .entry(n)
            .or_insert_with(|| FilterBank::zeros(bank.num_filters(), n, dim));
        for (p, (pre, da)) in layer.pre.iter().zip(d_act).enumerate() {
            for f in 0..bank.num_filters() {
                // ReLU subgradient at 0 is 0
                if pre[f] <= 0.0 {
                    continue;
                }
                let d_pre = da[f];
                if d_pre == 0.0 {
                    continue;
                }
                if train_filters {
                    g_bank.bias[f] += d_pre;
                    for t in 0..n {
                        let x = &embedded[p + t];
                        let gw = &mut g_bank.weights[f][t * dim..(t + 1) * dim];
                        for kk in 0..dim {
                            gw[kk] += d_pre * x[kk];
                        }
                    }
                }
                if train_embeddings {
                    for t in 0..n {
                        let w = &bank.weights[f][t * dim..(t + 1) * dim];
                        let dx = &mut d_embedded[p + t];
                        for kk in 0..dim {
                            dx[kk] += d_pre * w[kk];
                        }
                    }
                }
            }
        }
    }
}
