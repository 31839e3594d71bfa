//! Finite-difference checks for the hand-written reverse passes.
//!
//! The kernel pooling uses ln(max(count, guard)), which is flat inside the
//! guard region, and ReLU, which has a kink at zero.  The fixtures below use
//! a wide kernel bank and hand-picked values so every checked parameter sits
//! on a smooth part of the function; the tests assert that before comparing.

use std::collections::BTreeMap;

use super::convknrm::{ConvGrads, ConvKnrmModel};
use super::knrm::{KnrmModel, RankingGrads};
use super::{Embeddings, KernelBank};
use crate::Real;

const H: Real = 1e-6;
const TOL: Real = 1e-5;

fn wide_bank() -> KernelBank {
    // sigma is large enough that every kernel count stays far above the
    // log guard for any cosine in [-1, 1].
    KernelBank::new(vec![1.0, 0.5, 0.0, -0.5], vec![0.5; 4]).unwrap()
}

fn rel_err(analytic: Real, numeric: Real) -> Real {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn knrm_fixture() -> (KnrmModel, Vec<String>, Vec<String>) {
    let mut table = BTreeMap::new();
    table.insert("alpha".to_string(), vec![0.9, 0.2, -0.1]);
    table.insert("beta".to_string(), vec![0.3, 0.8, 0.4]);
    table.insert("gamma".to_string(), vec![-0.5, 0.6, 0.7]);
    table.insert("delta".to_string(), vec![0.2, -0.4, 0.9]);
    let mut model = KnrmModel::new(Embeddings { dim: 3, table }, wide_bank());
    model.w = vec![0.11, -0.07, 0.05, 0.09];
    model.b = 0.03;
    (model, toks("alpha beta"), toks("gamma delta alpha"))
}

#[test]
fn knrm_grad_matches_finite_differences() {
    let (model, q, d) = knrm_fixture();

    let fwd = model.forward(&q, &d).unwrap();
    for counts in &fwd.kernel_counts {
        for &c in counts {
            assert!(c > 1e-6, "fixture count {c} too close to the log guard");
        }
    }

    let mut grads = RankingGrads::default();
    model.backward(&fwd, 1.0, true, &mut grads);

    let score = |m: &KnrmModel| m.forward(&q, &d).unwrap().score;

    for k in 0..model.w.len() {
        let mut plus = model.clone();
        plus.w[k] += H;
        let mut minus = model.clone();
        minus.w[k] -= H;
        let numeric = (score(&plus) - score(&minus)) / (2.0 * H);
        assert!(
            rel_err(grads.w[k], numeric) < TOL,
            "w[{k}]: analytic {} vs numeric {numeric}",
            grads.w[k]
        );
    }

    let mut plus = model.clone();
    plus.b += H;
    let mut minus = model.clone();
    minus.b -= H;
    let numeric = (score(&plus) - score(&minus)) / (2.0 * H);
    assert!(rel_err(grads.b, numeric) < TOL);

    for token in ["alpha", "beta", "gamma", "delta"] {
        let g = grads.embeddings.get(token).unwrap();
        for i in 0..3 {
            let mut plus = model.clone();
            plus.embeddings.table.get_mut(token).unwrap()[i] += H;
            let mut minus = model.clone();
            minus.embeddings.table.get_mut(token).unwrap()[i] -= H;
            let numeric = (score(&plus) - score(&minus)) / (2.0 * H);
            assert!(
                rel_err(g[i], numeric) < TOL,
                "emb {token}[{i}]: analytic {} vs numeric {numeric}",
                g[i]
            );
        }
    }
}

#[test]
fn knrm_backward_skips_embeddings_when_frozen() {
    let (model, q, d) = knrm_fixture();
    let fwd = model.forward(&q, &d).unwrap();
    let mut grads = RankingGrads::default();
    model.backward(&fwd, 1.0, false, &mut grads);
    assert!(grads.embeddings.is_empty());
    assert!(grads.w.iter().any(|&g| g != 0.0));
}

fn conv_fixture() -> (ConvKnrmModel, Vec<String>, Vec<String>) {
    let mut table = BTreeMap::new();
    table.insert("alpha".to_string(), vec![0.9, 0.2]);
    table.insert("beta".to_string(), vec![0.3, 0.8]);
    table.insert("gamma".to_string(), vec![-0.5, 0.6]);
    table.insert("delta".to_string(), vec![0.2, -0.4]);
    let embeddings = Embeddings { dim: 2, table };
    let mut model = ConvKnrmModel::new(embeddings, wide_bank(), vec![1, 2], 2).unwrap();
    // Hand-picked filters with biases large enough that no ReLU
    // pre-activation lands near zero.
    let f1 = model.filters.get_mut(&1).unwrap();
    f1.weights = vec![vec![0.4, -0.3], vec![-0.2, 0.5]];
    f1.bias = vec![0.6, 0.7];
    let f2 = model.filters.get_mut(&2).unwrap();
    f2.weights = vec![vec![0.3, 0.1, -0.4, 0.2], vec![0.1, -0.2, 0.3, 0.4]];
    f2.bias = vec![0.8, 0.9];
    for (k, v) in model.w.iter_mut().enumerate() {
        *v = 0.01 * (k as Real % 7.0 - 3.0);
    }
    model.b = -0.05;
    (model, toks("alpha beta gamma"), toks("delta gamma alpha beta"))
}

#[test]
fn conv_knrm_grad_matches_finite_differences() {
    let (model, q, d) = conv_fixture();

    let fwd = model.forward(&q, &d).unwrap();
    for layer in fwd.q_grams.values().chain(fwd.d_grams.values()) {
        for row in &layer.pre {
            for &p in row {
                assert!(p.abs() > 1e-3, "fixture pre-activation {p} near ReLU kink");
            }
        }
    }

    let mut grads = ConvGrads::default();
    model.backward(&fwd, 1.0, true, true, &mut grads);

    let score = |m: &ConvKnrmModel| m.forward(&q, &d).unwrap().score;

    for k in 0..model.w.len() {
        let mut plus = model.clone();
        plus.w[k] += H;
        let mut minus = model.clone();
        minus.w[k] -= H;
        let numeric = (score(&plus) - score(&minus)) / (2.0 * H);
        assert!(
            rel_err(grads.w[k], numeric) < TOL,
            "w[{k}]: analytic {} vs numeric {numeric}",
            grads.w[k]
        );
    }

    let mut plus = model.clone();
    plus.b += H;
    let mut minus = model.clone();
    minus.b -= H;
    let numeric = (score(&plus) - score(&minus)) / (2.0 * H);
    assert!(rel_err(grads.b, numeric) < TOL);

    for (&n, bank) in &model.filters {
        let gbank = grads.filters.get(&n).unwrap();
        for f in 0..bank.weights.len() {
            for j in 0..bank.weights[f].len() {
                let mut plus = model.clone();
                plus.filters.get_mut(&n).unwrap().weights[f][j] += H;
                let mut minus = model.clone();
                minus.filters.get_mut(&n).unwrap().weights[f][j] -= H;
                let numeric = (score(&plus) - score(&minus)) / (2.0 * H);
                assert!(
                    rel_err(gbank.weights[f][j], numeric) < TOL,
                    "filter n={n} [{f}][{j}]: analytic {} vs numeric {numeric}",
                    gbank.weights[f][j]
                );
            }
            let mut plus = model.clone();
            plus.filters.get_mut(&n).unwrap().bias[f] += H;
            let mut minus = model.clone();
            minus.filters.get_mut(&n).unwrap().bias[f] -= H;
            let numeric = (score(&plus) - score(&minus)) / (2.0 * H);
            assert!(
                rel_err(gbank.bias[f], numeric) < TOL,
                "bias n={n} [{f}]: analytic {} vs numeric {numeric}",
                gbank.bias[f]
            );
        }
    }

    for token in ["alpha", "beta", "gamma", "delta"] {
        let g = grads.embeddings.get(token).unwrap();
        for i in 0..2 {
            let mut plus = model.clone();
            plus.embeddings.table.get_mut(token).unwrap()[i] += H;
            let mut minus = model.clone();
            minus.embeddings.table.get_mut(token).unwrap()[i] -= H;
            let numeric = (score(&plus) - score(&minus)) / (2.0 * H);
            assert!(
                rel_err(g[i], numeric) < TOL,
                "emb {token}[{i}]: analytic {} vs numeric {numeric}",
                g[i]
            );
        }
    }
}

#[test]
fn conv_knrm_freeze_flags_respected() {
    let (model, q, d) = conv_fixture();
    let fwd = model.forward(&q, &d).unwrap();

    let mut grads = ConvGrads::default();
    model.backward(&fwd, 1.0, false, false, &mut grads);
    assert!(grads.filters.is_empty() || grads.filters.values().all(|b| b
        .weights
        .iter()
        .all(|r| r.iter().all(|&g| g == 0.0))));
    assert!(grads.embeddings.is_empty());
    assert!(grads.w.iter().any(|&g| g != 0.0));
}
