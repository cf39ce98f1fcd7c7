//! Synthetic long-tailed multimodal datasets.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::apportion::apportion;
use crate::distribution::rank_powerlaw;
use crate::error::{ClimdError, Result};
use crate::simlab::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub modalities: usize,
    /// Feature dimension per modality.
    pub dims: Vec<usize>,
    pub n: usize,
    /// Class `k` (0-based) gets a share proportional to `(k + 1)^-imbalance_exponent`.
    pub imbalance_exponent: f64,
    /// Typical distance between two class centroids within a modality.
    pub class_separation: f64,
    pub noise_scale: f64,
    /// Weight in `[0, 1]` of the centroid component shared by all modalities.
    pub redundancy: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 5,
            modalities: 3,
            dims: vec![8, 8, 8],
            n: 2000,
            imbalance_exponent: 1.5,
            class_separation: 2.0,
            noise_scale: 1.0,
            redundancy: 0.3,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(ClimdError::validation("need at least 2 classes"));
        }
        if self.modalities < 2 {
            return Err(ClimdError::validation("need at least 2 modalities"));
        }
        if self.dims.len() != self.modalities {
            return Err(ClimdError::validation(format!(
                "{} dims given for {} modalities",
                self.dims.len(),
                self.modalities
            )));
        }
        if self.dims.contains(&0) {
            return Err(ClimdError::validation("modality dims must be >= 1"));
        }
        if self.n < self.classes {
            return Err(ClimdError::Infeasible(format!(
                "{} samples cannot cover {} classes",
                self.n, self.classes
            )));
        }
        if !(self.imbalance_exponent >= 0.0 && self.imbalance_exponent.is_finite()) {
            return Err(ClimdError::validation("imbalance exponent must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.redundancy) {
            return Err(ClimdError::validation("redundancy must lie in [0, 1]"));
        }
        if !(self.class_separation >= 0.0 && self.noise_scale >= 0.0) {
            return Err(ClimdError::validation("separation and noise must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: usize,
    /// One feature vector per modality.
    pub features: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub num_classes: usize,
    pub dims: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn labeled_ids(&self) -> Vec<(String, usize)> {
        self.samples.iter().map(|s| (s.id.clone(), s.label)).collect()
    }

    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0; self.num_classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Holds out `per_class` randomly chosen samples of every class as a
    /// balanced test set. Both halves keep the original sample order.
    pub fn stratified_split(&self, per_class: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        let counts = self.class_counts();
        if let Some(c) = counts.iter().position(|&n| (n as usize) <= per_class) {
            return Err(ClimdError::Infeasible(format!(
                "class {c} has {} samples, cannot hold out {per_class} and keep one for training",
                counts[c]
            )));
        }
        let mut rng = seeded_rng(seed, "split");
        let mut held = vec![false; self.samples.len()];
        for c in 0..self.num_classes {
            let members: Vec<usize> = (0..self.samples.len()).filter(|&i| self.samples[i].label == c).collect();
            for i in rand::seq::index::sample(&mut rng, members.len(), per_class) {
                held[members[i]] = true;
            }
        }
        let pick = |want: bool| Dataset {
            samples: self
                .samples
                .iter()
                .zip(&held)
                .filter(|(_, &h)| h == want)
                .map(|(s, _)| s.clone())
                .collect(),
            num_classes: self.num_classes,
            dims: self.dims.clone(),
        };
        Ok((pick(false), pick(true)))
    }
}

/// Largest-remainder split of `n` by `(k+1)^-exponent`, then every empty
/// class takes one sample from the currently largest class.
pub fn class_sizes(classes: usize, n: usize, exponent: f64) -> Result<Vec<u64>> {
    if n < classes {
        return Err(ClimdError::Infeasible(format!("{n} samples cannot cover {classes} classes")));
    }
    let weights = rank_powerlaw(classes, exponent);
    let mut sizes = apportion(&weights, n as u64, &vec![n as u64; classes])?;
    for c in 0..classes {
        if sizes[c] == 0 {
            let donor = (0..classes).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))).unwrap();
            sizes[donor] -= 1;
            sizes[c] = 1;
        }
    }
    Ok(sizes)
}

fn gaussian(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Class-conditional Gaussian features. Centroid of class `c` in modality
/// `m` is `sqrt(rho) * shared_c + sqrt(1 - rho) * own_{c,m}` with entries of
/// both parts drawn from `N(0, sep^2 / (2 d_m))`; `shared_c` is one draw
/// truncated to each modality's dimension.
pub fn generate_dataset(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let sizes = class_sizes(spec.classes, spec.n, spec.imbalance_exponent)?;
    let d_max = *spec.dims.iter().max().expect("validated non-empty");
    let mut rng = seeded_rng(spec.seed, "centroids");
    let shared: Vec<Vec<f64>> = (0..spec.classes).map(|_| gaussian(&mut rng, d_max)).collect();
    let centroids: Vec<Vec<Vec<f64>>> = (0..spec.classes)
        .map(|c| {
            spec.dims
                .iter()
                .map(|&d| {
                    let scale = spec.class_separation / (2.0 * d as f64).sqrt();
                    let own = gaussian(&mut rng, d);
                    (0..d)
                        .map(|j| scale * (spec.redundancy.sqrt() * shared[c][j] + (1.0 - spec.redundancy).sqrt() * own[j]))
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut rng = seeded_rng(spec.seed, "features");
    let width = spec.n.to_string().len();
    let mut samples = Vec::with_capacity(spec.n);
    for (c, &size) in sizes.iter().enumerate() {
        for _ in 0..size {
            let features = centroids[c]
                .iter()
                .map(|mu| mu.iter().map(|&m| m + spec.noise_scale * rng.sample::<f64, _>(StandardNormal)).collect())
                .collect();
            samples.push(Sample {
                id: format!("s{:0width$}", samples.len()),
                label: c,
                features,
            });
        }
    }
    Ok(Dataset {
        samples,
        num_classes: spec.classes,
        dims: spec.dims.clone(),
    })
}
