//! Early-fusion classifier with per-modality auxiliary heads.
//!
//! ```text
//! x_m --enc_m--> e_m --+-- concat --head--> softmax   (fused prediction)
//!                      +--aux_m--> softmax            (modality m prediction)
//! ```
//!
//! All maps are affine, so gradients are closed form.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ClimdError, Result};

/// Dense map `y = W x + b`, `W` row-major `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub input: usize,
    pub output: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn zeros(input: usize, output: usize) -> Self {
        Affine {
            input,
            output,
            weight: vec![0.0; input * output],
            bias: vec![0.0; output],
        }
    }

    /// Weights `N(0, 1/input)`, zero bias.
    pub fn random(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let std = (1.0 / input as f64).sqrt();
        Affine {
            input,
            output,
            weight: (0..input * output).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect(),
            bias: vec![0.0; output],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input);
        self.weight
            .chunks(self.input)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Accumulates `dW += g x^T`, `db += g` and returns `W^T g`.
    fn backward(&self, x: &[f64], g: &[f64], grad: &mut Affine) -> Vec<f64> {
        let mut dx = vec![0.0; self.input];
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            grad.bias[o] += go;
            let row = o * self.input;
            for i in 0..self.input {
                grad.weight[row + i] += go * x[i];
                dx[i] += self.weight[row + i] * go;
            }
        }
        dx
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(&self.bias)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(&mut self.bias)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// `-ln softmax(logits)[label]` computed as `logsumexp - logit`.
fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub fused_probs: Vec<f64>,
    pub modality_probs: Vec<Vec<f64>>,
    pub embeddings: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub encoders: Vec<Affine>,
    pub head: Affine,
    pub aux_heads: Vec<Affine>,
}

impl FusionModel {
    pub fn new(dims: &[usize], hidden: usize, classes: usize, rng: &mut impl Rng) -> Self {
        FusionModel {
            encoders: dims.iter().map(|&d| Affine::random(d, hidden, rng)).collect(),
            head: Affine::random(dims.len() * hidden, classes, rng),
            aux_heads: dims.iter().map(|_| Affine::random(hidden, classes, rng)).collect(),
        }
    }

    /// Same shapes, all parameters zero.
    pub fn zeros_like(&self) -> Self {
        FusionModel {
            encoders: self.encoders.iter().map(|a| Affine::zeros(a.input, a.output)).collect(),
            head: Affine::zeros(self.head.input, self.head.output),
            aux_heads: self.aux_heads.iter().map(|a| Affine::zeros(a.input, a.output)).collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.head.output
    }

    pub fn num_modalities(&self) -> usize {
        self.encoders.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.encoders.iter().map(|a| a.input).collect()
    }

    fn check_input(&self, features: &[Vec<f64>]) -> Result<()> {
        if features.len() != self.encoders.len() {
            return Err(ClimdError::validation(format!(
                "sample has {} modalities, model expects {}",
                features.len(),
                self.encoders.len()
            )));
        }
        for (m, (x, enc)) in features.iter().zip(&self.encoders).enumerate() {
            if x.len() != enc.input {
                return Err(ClimdError::validation(format!(
                    "modality {m} has dimension {}, model expects {}",
                    x.len(),
                    enc.input
                )));
            }
        }
        Ok(())
    }

    fn logits(&self, features: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
        let embeddings: Vec<Vec<f64>> = self.encoders.iter().zip(features).map(|(enc, x)| enc.apply(x)).collect();
        let fused = self.head.apply(&embeddings.concat());
        let aux = self.aux_heads.iter().zip(&embeddings).map(|(h, e)| h.apply(e)).collect();
        (embeddings, fused, aux)
    }

    pub fn forward(&self, features: &[Vec<f64>]) -> Result<ForwardPass> {
        self.check_input(features)?;
        let (embeddings, fused, aux) = self.logits(features);
        Ok(ForwardPass {
            fused_probs: softmax(&fused),
            modality_probs: aux.iter().map(|z| softmax(z)).collect(),
            embeddings,
        })
    }

    pub fn predict(&self, features: &[Vec<f64>]) -> Result<usize> {
        let pass = self.forward(features)?;
        Ok(argmax(&pass.fused_probs))
    }

    /// Per-sample loss: fused cross-entropy plus the mean auxiliary cross-entropy.
    pub fn sample_loss(&self, features: &[Vec<f64>], label: usize) -> Result<f64> {
        self.check_input(features)?;
        let (_, fused, aux) = self.logits(features);
        let m = aux.len() as f64;
        Ok(cross_entropy(&fused, label) + aux.iter().map(|z| cross_entropy(z, label)).sum::<f64>() / m)
    }

    /// Mean loss over `batch` and its gradient.
    pub fn loss_and_grad(&self, batch: &[(&[Vec<f64>], usize)]) -> Result<(f64, FusionModel)> {
        let mut grad = self.zeros_like();
        if batch.is_empty() {
            return Ok((0.0, grad));
        }
        let classes = self.num_classes();
        let m = self.num_modalities();
        let hidden: Vec<usize> = self.encoders.iter().map(|e| e.output).collect();
        let mut total = 0.0;
        for &(features, label) in batch {
            self.check_input(features)?;
            if label >= classes {
                return Err(ClimdError::validation(format!("label {label} outside {classes} classes")));
            }
            let (embeddings, fused, aux) = self.logits(features);
            total += cross_entropy(&fused, label) + aux.iter().map(|z| cross_entropy(z, label)).sum::<f64>() / m as f64;

            let mut d_fused = softmax(&fused);
            d_fused[label] -= 1.0;
            let d_concat = self.head.backward(&embeddings.concat(), &d_fused, &mut grad.head);

            let mut offset = 0;
            for k in 0..m {
                let mut d_aux = softmax(&aux[k]);
                d_aux[label] -= 1.0;
                d_aux.iter_mut().for_each(|g| *g /= m as f64);
                let d_emb_aux = self.aux_heads[k].backward(&embeddings[k], &d_aux, &mut grad.aux_heads[k]);
                let d_emb: Vec<f64> = d_concat[offset..offset + hidden[k]]
                    .iter()
                    .zip(&d_emb_aux)
                    .map(|(a, b)| a + b)
                    .collect();
                offset += hidden[k];
                self.encoders[k].backward(&features[k], &d_emb, &mut grad.encoders[k]);
            }
        }
        let scale = 1.0 / batch.len() as f64;
        grad.params_mut().for_each(|p| *p *= scale);
        Ok((total * scale, grad))
    }

    /// `self -= lr * grad`.
    pub fn step(&mut self, grad: &FusionModel, lr: f64) {
        for (p, g) in self.params_mut().zip(grad.params()) {
            *p -= lr * g;
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().count()
    }

    /// Parameters flattened in a fixed order: encoders, fused head, auxiliary heads.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params().copied().collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_params(), "parameter count mismatch");
        for (p, v) in self.params_mut().zip(values) {
            *p = *v;
        }
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.encoders
            .iter()
            .flat_map(Affine::params)
            .chain(self.head.params())
            .chain(self.aux_heads.iter().flat_map(Affine::params))
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.encoders
            .iter_mut()
            .flat_map(Affine::params_mut)
            .chain(self.head.params_mut())
            .chain(self.aux_heads.iter_mut().flat_map(Affine::params_mut))
    }
}

/// Index of the largest entry, first on ties.
pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}
