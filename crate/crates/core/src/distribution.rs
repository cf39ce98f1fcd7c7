//! Class-size distribution fitting and per-epoch sampling targets.
//!
//! Class sizes `n` are modelled by the power law
//! `P(n) = (g*a - 1) * n_min^(g*a - 1) * n^(-g*a)` on `[n_min, inf)`, where
//! `g` is a smoothing constant and `a > 1/g` is fitted by maximum likelihood
//! over the `C` class counts. The fitted value caps a linear ramp `a(t)` that
//! moves each epoch's class mix from uniform to the normalized rank power law.

use serde::{Deserialize, Serialize};

use crate::error::{ClimdError, Result};

pub const DEFAULT_GAMMA: f64 = 0.3;

/// Outcome of the maximum-likelihood fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AlphaFit {
    Fitted { alpha_hat: f64 },
    /// All classes have the same size; the estimator's denominator is zero.
    /// `fallback` is used as the schedule cap.
    DegenerateBalanced { fallback: f64 },
}

impl AlphaFit {
    /// The value used as the final-epoch imbalance parameter.
    pub fn cap(&self) -> f64 {
        match *self {
            AlphaFit::Fitted { alpha_hat } => alpha_hat,
            AlphaFit::DegenerateBalanced { fallback } => fallback,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, AlphaFit::DegenerateBalanced { .. })
    }
}

/// Default fallback for balanced data: `1 + 1/gamma`.
pub fn balanced_fallback(gamma: f64) -> f64 {
    1.0 + 1.0 / gamma
}

/// Per-class counts with their size ranks and fitted imbalance parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    counts: Vec<u64>,
    /// `rank_of_class[c]` is the 1-based rank of class `c`.
    rank_of_class: Vec<usize>,
    /// `class_of_rank[k]` is the class holding rank `k + 1`.
    class_of_rank: Vec<usize>,
    n_min: u64,
    gamma: f64,
    fit: AlphaFit,
}

impl ClassDistribution {
    /// Fits the distribution with the default balanced fallback `1 + 1/gamma`.
    pub fn from_counts(counts: Vec<u64>, gamma: f64) -> Result<Self> {
        Self::with_fallback(counts, gamma, balanced_fallback(gamma))
    }

    pub fn with_fallback(counts: Vec<u64>, gamma: f64, alpha_balanced: f64) -> Result<Self> {
        let fit = fit_alpha(&counts, gamma, alpha_balanced)?;
        Self::from_parts(counts, gamma, fit)
    }

    /// Rebuilds a distribution from a previously computed fit, e.g. one read
    /// back from a report file.
    pub fn from_parts(counts: Vec<u64>, gamma: f64, fit: AlphaFit) -> Result<Self> {
        validate_counts(&counts)?;
        validate_gamma(gamma)?;
        if !fit.cap().is_finite() || fit.cap() < 1.0 {
            return Err(ClimdError::validation(format!(
                "imbalance cap {} must be a finite value >= 1",
                fit.cap()
            )));
        }
        let class_of_rank = rank_classes(&counts);
        let mut rank_of_class = vec![0; counts.len()];
        for (k, &c) in class_of_rank.iter().enumerate() {
            rank_of_class[c] = k + 1;
        }
        let n_min = *counts.iter().min().expect("validated non-empty");
        Ok(ClassDistribution {
            counts,
            rank_of_class,
            class_of_rank,
            n_min,
            gamma,
            fit,
        })
    }

    /// Counts the labels `0..num_classes`; every class must occur.
    pub fn from_labels(labels: &[usize], num_classes: usize, gamma: f64) -> Result<Self> {
        let mut counts = vec![0u64; num_classes];
        for &l in labels {
            *counts.get_mut(l).ok_or_else(|| {
                ClimdError::validation(format!("label {l} outside {num_classes} classes"))
            })? += 1;
        }
        Self::from_counts(counts, gamma)
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn n_min(&self) -> u64 {
        self.n_min
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn fit(&self) -> AlphaFit {
        self.fit
    }

    pub fn alpha_cap(&self) -> f64 {
        self.fit.cap()
    }

    /// 1-based rank of `class_id` (1 = largest class).
    pub fn rank_of(&self, class_id: usize) -> usize {
        self.rank_of_class[class_id]
    }

    /// Class ids ordered by rank.
    pub fn classes_by_rank(&self) -> &[usize] {
        &self.class_of_rank
    }

    /// Counts ordered by rank; non-increasing.
    pub fn counts_by_rank(&self) -> Vec<u64> {
        self.class_of_rank.iter().map(|&c| self.counts[c]).collect()
    }

    pub fn pdf(&self, n: f64, alpha: f64) -> Result<f64> {
        powerlaw_pdf(n, self.n_min as f64, self.gamma, alpha)
    }
}

fn validate_counts(counts: &[u64]) -> Result<()> {
    if counts.len() < 2 {
        return Err(ClimdError::validation(format!(
            "need at least 2 classes, got {}",
            counts.len()
        )));
    }
    let empty: Vec<String> = counts
        .iter()
        .enumerate()
        .filter(|(_, &n)| n == 0)
        .map(|(c, _)| c.to_string())
        .collect();
    if !empty.is_empty() {
        return Err(ClimdError::validation(format!(
            "class(es) with no samples: {}",
            empty.join(", ")
        )));
    }
    Ok(())
}

fn validate_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(ClimdError::validation(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

/// Class ids sorted by descending count, ties by ascending id.
fn rank_classes(counts: &[u64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order
}

/// Power-law density `(g*a - 1) * n_min^(g*a - 1) * n^(-g*a)`.
pub fn powerlaw_pdf(n: f64, n_min: f64, gamma: f64, alpha: f64) -> Result<f64> {
    validate_gamma(gamma)?;
    if !(n_min > 0.0) {
        return Err(ClimdError::validation(format!("n_min must be positive, got {n_min}")));
    }
    let k = gamma * alpha;
    if !(k > 1.0) {
        return Err(ClimdError::validation(format!(
            "gamma*alpha must exceed 1, got {k}"
        )));
    }
    if !(n >= n_min) {
        return Err(ClimdError::validation(format!("n = {n} below n_min = {n_min}")));
    }
    // (k-1) * (n_min/n)^(k-1) / n keeps the powers in range for large k
    Ok((k - 1.0) * (n_min / n).powf(k - 1.0) / n)
}

/// Closed-form maximum-likelihood estimate
/// `(1/g) * (1 + C / (sum_c ln n_c - C ln n_min))`.
///
/// Balanced counts make the denominator zero; the fit is then reported as
/// [`AlphaFit::DegenerateBalanced`] carrying `alpha_balanced`.
pub fn fit_alpha(counts: &[u64], gamma: f64, alpha_balanced: f64) -> Result<AlphaFit> {
    validate_counts(counts)?;
    validate_gamma(gamma)?;
    let n_min = *counts.iter().min().expect("validated non-empty");
    // ln(n/n_min) summed term by term is exact zero for equal counts and never negative
    let denom: f64 = counts.iter().map(|&n| (n as f64 / n_min as f64).ln()).sum();
    if denom == 0.0 {
        return Ok(AlphaFit::DegenerateBalanced {
            fallback: alpha_balanced,
        });
    }
    let c = counts.len() as f64;
    Ok(AlphaFit::Fitted {
        alpha_hat: (1.0 + c / denom) / gamma,
    })
}

/// Linear ramp `1 + (alpha_cap - 1) * (t - 1) / (T - 1)`, clamped to
/// `[1, alpha_cap]`. A single-epoch run returns `alpha_cap`.
pub fn alpha_schedule(t: usize, total_epochs: usize, alpha_cap: f64) -> Result<f64> {
    check_epoch(t, total_epochs)?;
    if !(alpha_cap >= 1.0) {
        return Err(ClimdError::validation(format!(
            "alpha cap must be >= 1, got {alpha_cap}"
        )));
    }
    if total_epochs == 1 {
        return Ok(alpha_cap);
    }
    let a = 1.0 + (alpha_cap - 1.0) * ramp_weight(t, total_epochs);
    Ok(a.clamp(1.0, alpha_cap))
}

fn check_epoch(t: usize, total_epochs: usize) -> Result<()> {
    if total_epochs == 0 || t == 0 || t > total_epochs {
        return Err(ClimdError::validation(format!(
            "epoch {t} outside 1..={total_epochs}"
        )));
    }
    Ok(())
}

/// `(t-1)/(T-1)`, with 1 for single-epoch runs.
fn ramp_weight(t: usize, total_epochs: usize) -> f64 {
    if total_epochs == 1 {
        1.0
    } else {
        (t - 1) as f64 / (total_epochs - 1) as f64
    }
}

/// `round(t * N / T)` with halves rounded up, in exact integer arithmetic.
pub fn subset_size(t: usize, total_epochs: usize, n: u64) -> u64 {
    let (t, total) = (t as u128, total_epochs as u128);
    ((2 * t * n as u128 + total) / (2 * total)) as u64
}

/// Normalized rank power law `k^(-exponent) / sum_i i^(-exponent)` for ranks `1..=c`.
pub fn rank_powerlaw(c: usize, exponent: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=c).map(|k| (k as f64).powf(-exponent)).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / z).collect()
}

/// Sampling target for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochTarget {
    pub t: usize,
    pub alpha_t: f64,
    /// Probability per rank; `q[0]` is rank 1.
    pub q: Vec<f64>,
    pub subset_size: u64,
}

/// Mixture of uniform and rank power law with exponent `gamma * alpha(t)`,
/// weighted by `(t-1)/(T-1)`.
pub fn epoch_target(t: usize, total_epochs: usize, n: u64, dist: &ClassDistribution) -> Result<EpochTarget> {
    let alpha_t = alpha_schedule(t, total_epochs, dist.alpha_cap())?;
    let w = ramp_weight(t, total_epochs);
    let c = dist.num_classes();
    let uniform = 1.0 / c as f64;
    let q = if w == 0.0 {
        vec![uniform; c]
    } else {
        rank_powerlaw(c, dist.gamma() * alpha_t)
            .into_iter()
            .map(|p| (1.0 - w) * uniform + w * p)
            .collect()
    };
    Ok(EpochTarget {
        t,
        alpha_t,
        q,
        subset_size: subset_size(t, total_epochs, n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pdf_examples() {
        // k = 2 at n = n_min gives 1/n_min
        for n_min in [1.0, 3.0, 10.0, 250.0] {
            assert_close!(powerlaw_pdf(n_min, n_min, 0.5, 4.0).unwrap(), 1.0 / n_min, 1e-15);
        }
        assert_close!(powerlaw_pdf(10.0, 10.0, 0.3, 5.0).unwrap(), 0.05, 1e-15);
        let near_one = powerlaw_pdf(20.0, 10.0, 0.3, (1.0 + 1e-9) / 0.3).unwrap();
        assert!(near_one < 1e-9);
    }

    #[test]
    fn pdf_domain_errors() {
        assert!(powerlaw_pdf(5.0, 10.0, 0.3, 5.0).is_err());
        assert!(powerlaw_pdf(10.0, 10.0, 0.3, 1.0 / 0.3).is_err());
        assert!(powerlaw_pdf(10.0, 10.0, 0.0, 5.0).is_err());
    }

    #[test]
    fn fit_examples() {
        // 40-digit evaluations of the closed form
        let a = fit_alpha(&[100, 50, 10], 0.3, 0.0).unwrap().cap();
        assert_close!(a, 5.889_555_519_686_648, 1e-12);
        let a = fit_alpha(&[1000, 1], 0.3, 0.0).unwrap().cap();
        assert_close!(a, 4.298_432_182_007_226, 1e-12);

        assert_eq!(
            fit_alpha(&[7, 7, 7, 7], 0.3, balanced_fallback(0.3)).unwrap(),
            AlphaFit::DegenerateBalanced {
                fallback: 1.0 + 1.0 / 0.3
            }
        );
        assert!(fit_alpha(&[5], 0.3, 1.0).is_err());
        assert!(fit_alpha(&[5, 0], 0.3, 1.0).is_err());
        assert!(fit_alpha(&[5, 3], -1.0, 1.0).is_err());
    }

    #[test]
    fn ranks_descend_with_id_tiebreak() {
        let d = ClassDistribution::from_counts(vec![5, 9, 5, 12], 0.3).unwrap();
        assert_eq!(d.classes_by_rank(), &[3, 1, 0, 2]);
        assert_eq!(d.rank_of(0), 3);
        assert_eq!(d.rank_of(2), 4);
        assert_eq!(d.counts_by_rank(), vec![12, 9, 5, 5]);
        assert_eq!(d.n_min(), 5);
    }

    #[test]
    fn from_labels_requires_every_class() {
        let d = ClassDistribution::from_labels(&[0, 1, 1, 2, 2, 2], 3, 0.3).unwrap();
        assert_eq!(d.counts(), &[1, 2, 3]);
        let err = ClassDistribution::from_labels(&[0, 0, 2], 3, 0.3).unwrap_err();
        assert!(err.to_string().contains("no samples: 1"), "{err}");
        assert!(ClassDistribution::from_labels(&[0, 3], 3, 0.3).is_err());
    }

    #[test]
    fn alpha_ramp() {
        assert_eq!(alpha_schedule(1, 10, 5.0).unwrap(), 1.0);
        assert_eq!(alpha_schedule(10, 10, 5.0).unwrap(), 5.0);
        assert_close!(alpha_schedule(5, 10, 5.0).unwrap(), 1.0 + 4.0 * 4.0 / 9.0, 1e-15);
        assert_eq!(alpha_schedule(1, 1, 3.5).unwrap(), 3.5);
        assert!(alpha_schedule(0, 10, 5.0).is_err());
        assert!(alpha_schedule(11, 10, 5.0).is_err());
        assert!(alpha_schedule(2, 10, 0.5).is_err());
    }

    #[test]
    fn subset_sizes_round_half_up() {
        assert_eq!(subset_size(1, 10, 1000), 100);
        assert_eq!(subset_size(1, 3, 10), 3);
        assert_eq!(subset_size(2, 3, 10), 7);
        assert_eq!(subset_size(1, 4, 2), 1);
        assert_eq!(subset_size(3, 3, 10), 10);
    }

    #[test]
    fn figure_two_targets() {
        let dist = ClassDistribution::from_parts(vec![100; 10], 0.3, AlphaFit::Fitted { alpha_hat: 5.0 }).unwrap();
        let first = epoch_target(1, 10, 1000, &dist).unwrap();
        assert_eq!(first.q, vec![0.1; 10]);
        assert_eq!(first.subset_size, 100);

        let last = epoch_target(10, 10, 1000, &dist).unwrap();
        // 1 / sum_{i=1}^{10} i^-1.5 at 40 digits
        assert_close!(last.q[0], 0.501_168_601_554_161_7, 1e-15);
        assert_close!(last.q[9], 0.015_848_342_726_725_53, 1e-15);
        assert_eq!(last.subset_size, 1000);
        for t in 1..=10 {
            let q = epoch_target(t, 10, 1000, &dist).unwrap().q;
            assert_close!(q.iter().sum::<f64>(), 1.0, 1e-12);
            assert!(q.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn single_epoch_target_is_pure_power_law() {
        let dist = ClassDistribution::from_counts(vec![50, 20, 5], 0.3).unwrap();
        let target = epoch_target(1, 1, 75, &dist).unwrap();
        assert_eq!(target.q, rank_powerlaw(3, 0.3 * dist.alpha_cap()));
        assert_eq!(target.subset_size, 75);
    }
}
