//! Reference computations shared by the integration and acceptance tests.
//! None of these call into the code path they check.
#![allow(dead_code)]

use climd_core::simlab::FusionModel;

/// Log-likelihood of the class counts under the power law with exponent
/// `gamma * alpha`, written out term by term.
pub fn powerlaw_loglik(counts: &[u64], gamma: f64, alpha: f64) -> f64 {
    let k = gamma * alpha;
    let n_min = *counts.iter().min().unwrap() as f64;
    counts
        .iter()
        .map(|&n| {
            let n = n as f64;
            (k - 1.0).ln() + (k - 1.0) * n_min.ln() - k * n.ln()
        })
        .sum()
}

/// Maximizes the log-likelihood over the grid `1/gamma + step * i`, doubling
/// the upper end until the maximum is interior.
pub fn grid_search_alpha(counts: &[u64], gamma: f64, step: f64) -> f64 {
    let lo = 1.0 / gamma;
    let mut hi = lo + 10.0;
    loop {
        let steps = ((hi - lo) / step).ceil() as usize;
        let (mut best_i, mut best) = (1usize, f64::NEG_INFINITY);
        for i in 1..=steps {
            let ll = powerlaw_loglik(counts, gamma, lo + step * i as f64);
            if ll > best {
                best = ll;
                best_i = i;
            }
        }
        if best_i < steps {
            return lo + step * best_i as f64;
        }
        hi = lo + 2.0 * (hi - lo);
    }
}

/// Composite Simpson integral of the power-law density over `[n_min, inf)`
/// via `n = n_min * e^s`, truncated where the tail mass drops below 1e-12.
pub fn powerlaw_mass(n_min: f64, gamma: f64, alpha: f64, pdf: impl Fn(f64) -> f64) -> f64 {
    let k = gamma * alpha - 1.0;
    let s_max = 12.0 * std::f64::consts::LN_10 / k;
    let intervals = 200_000;
    let h = s_max / intervals as f64;
    let f = |s: f64| {
        let n = n_min * s.exp();
        pdf(n) * n
    };
    let mut acc = f(0.0) + f(s_max);
    for i in 1..intervals {
        acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

fn affine(weight: &[f64], bias: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    (0..bias.len())
        .map(|o| {
            let mut acc = bias[o];
            for i in 0..cols {
                acc += weight[o * cols + i] * x[i];
            }
            acc
        })
        .collect()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Fused and per-modality probabilities computed straight from the weights.
pub fn reference_forward(model: &FusionModel, features: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let emb: Vec<Vec<f64>> = model
        .encoders
        .iter()
        .zip(features)
        .map(|(e, x)| affine(&e.weight, &e.bias, x))
        .collect();
    let mut concat = Vec::new();
    for e in &emb {
        concat.extend_from_slice(e);
    }
    let fused = softmax(&affine(&model.head.weight, &model.head.bias, &concat));
    let aux = model
        .aux_heads
        .iter()
        .zip(&emb)
        .map(|(h, e)| softmax(&affine(&h.weight, &h.bias, e)))
        .collect();
    (fused, aux)
}

/// Central finite-difference gradient of the mean batch loss.
pub fn finite_difference_grad(model: &FusionModel, batch: &[(&[Vec<f64>], usize)], step: f64) -> Vec<f64> {
    let base = model.flat_params();
    let mut probe = model.clone();
    let loss = |m: &FusionModel| {
        batch.iter().map(|(x, y)| m.sample_loss(x, *y).unwrap()).sum::<f64>() / batch.len() as f64
    };
    let mut grad = vec![0.0; base.len()];
    let mut params = base.clone();
    for i in 0..base.len() {
        params[i] = base[i] + step;
        probe.set_flat_params(&params);
        let up = loss(&probe);
        params[i] = base[i] - step;
        probe.set_flat_params(&params);
        let down = loss(&probe);
        params[i] = base[i];
        grad[i] = (up - down) / (2.0 * step);
    }
    grad
}

/// `|a - b| / max(|a|, |b|)` over whole vectors.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// `1 / sum_{i=1}^{c} i^-exponent * k^-exponent`, summed smallest term first.
pub fn rank_law(c: usize, exponent: f64) -> Vec<f64> {
    let z: f64 = (1..=c).rev().map(|i| (i as f64).powf(-exponent)).sum();
    (1..=c).map(|k| (k as f64).powf(-exponent) / z).collect()
}
