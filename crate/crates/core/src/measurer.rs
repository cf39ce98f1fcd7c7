//! Per-sample training difficulty from multimodal model outputs.
//!
//! A sample's difficulty `r` combines two signals:
//!
//! - intra-modal confidence `psi`: sigmoid of the class-averaged log
//!   probability each modality's predictor assigns to the true class;
//! - inter-modal complementarity `phi`: one minus the mean pairwise cosine
//!   similarity of the modality embeddings.
//!
//! `r = phi + mean(psi)`. The measurer is model-agnostic: it consumes
//! [`SampleTrace`] records and never looks at raw features.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ClimdError, Result};

/// Floor applied to the true-class probability before taking its log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance on `|sum(probs) - 1|`.
pub const PROB_SUM_TOL: f64 = 1e-6;

/// One modality's view of a sample: class probabilities and the encoder
/// embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityOutput {
    pub probs: Vec<f64>,
    pub embedding: Vec<f64>,
}

impl ModalityOutput {
    pub fn validate(&self) -> Result<()> {
        validate_probs(&self.probs)?;
        validate_embedding(&self.embedding)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub sample_id: String,
    pub label: usize,
    pub modalities: Vec<ModalityOutput>,
}

impl SampleTrace {
    /// Class count shared by all modalities.
    pub fn num_classes(&self) -> Option<usize> {
        self.modalities.first().map(|m| m.probs.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.modalities.len() < 2 {
            return Err(ClimdError::validation(format!(
                "sample {}: need at least 2 modalities, got {}",
                self.sample_id,
                self.modalities.len()
            )));
        }
        let c = self.modalities[0].probs.len();
        for (m, out) in self.modalities.iter().enumerate() {
            if out.probs.len() != c {
                return Err(ClimdError::validation(format!(
                    "sample {}: modality {} has {} classes, modality 0 has {}",
                    self.sample_id,
                    m,
                    out.probs.len(),
                    c
                )));
            }
            out.validate().map_err(|e| {
                ClimdError::validation(format!("sample {} modality {}: {}", self.sample_id, m, e))
            })?;
        }
        if self.label >= c {
            return Err(ClimdError::validation(format!(
                "sample {}: label {} out of range for {} classes",
                self.sample_id, self.label, c
            )));
        }
        Ok(())
    }
}

/// Combined difficulty of one sample with its components.
#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyRecord {
    pub sample_id: String,
    pub label: usize,
    pub psi: Vec<f64>,
    pub phi: f64,
    pub r: f64,
}

impl DifficultyRecord {
    pub fn mean_psi(&self) -> f64 {
        self.psi.iter().sum::<f64>() / self.psi.len() as f64
    }
}

/// Difficulty records in input order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DifficultyTable {
    pub records: Vec<DifficultyRecord>,
}

impl DifficultyTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Modality count, if the table is non-empty.
    pub fn num_modalities(&self) -> Option<usize> {
        self.records.first().map(|r| r.psi.len())
    }

    /// Per-class sample counts indexed by label, sized to `num_classes`.
    pub fn class_counts(&self, num_classes: usize) -> Result<Vec<u64>> {
        let mut counts = vec![0u64; num_classes];
        for rec in &self.records {
            let slot = counts.get_mut(rec.label).ok_or_else(|| {
                ClimdError::validation(format!(
                    "sample {} has label {} outside {} classes",
                    rec.sample_id, rec.label, num_classes
                ))
            })?;
            *slot += 1;
        }
        Ok(counts)
    }
}

/// Which end of the `r` scale counts as easy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DifficultyOrder {
    /// Larger `r` (confident and complementary) is easier; queues sort by descending `r`.
    #[default]
    LargerIsEasier,
    /// Smaller `r` is easier; queues sort by ascending `r`.
    SmallerIsEasier,
}

impl std::str::FromStr for DifficultyOrder {
    type Err = ClimdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "larger-is-easier" => Ok(DifficultyOrder::LargerIsEasier),
            "smaller-is-easier" => Ok(DifficultyOrder::SmallerIsEasier),
            other => Err(ClimdError::validation(format!(
                "unknown difficulty order {other:?} (expected larger-is-easier or smaller-is-easier)"
            ))),
        }
    }
}

impl std::fmt::Display for DifficultyOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DifficultyOrder::LargerIsEasier => "larger-is-easier",
            DifficultyOrder::SmallerIsEasier => "smaller-is-easier",
        })
    }
}

fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.len() < 2 {
        return Err(ClimdError::validation(format!(
            "probability vector needs at least 2 classes, got {}",
            probs.len()
        )));
    }
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0) {
        return Err(ClimdError::validation(format!("probability {p} outside [0, 1]")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(ClimdError::validation(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(())
}

fn validate_embedding(embedding: &[f64]) -> Result<()> {
    if embedding.is_empty() {
        return Err(ClimdError::validation("embedding is empty"));
    }
    if embedding.iter().any(|v| !v.is_finite()) {
        return Err(ClimdError::validation("embedding has non-finite entries"));
    }
    if norm(embedding) == 0.0 {
        return Err(ClimdError::validation("embedding has zero norm"));
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `sigmoid(ln(max(probs[label], 1e-12)) / C)` with `C = probs.len()`.
///
/// The one-hot target collapses the class sum to the true-class term, so the
/// score lies in `(0, 0.5]` and equals `0.5` only when the true class gets all
/// the mass.
pub fn intra_modal_confidence(probs: &[f64], label: usize) -> Result<f64> {
    validate_probs(probs)?;
    let c = probs.len();
    let p = *probs
        .get(label)
        .ok_or_else(|| ClimdError::validation(format!("label {label} out of range for {c} classes")))?;
    Ok(sigmoid(p.max(PROB_FLOOR).ln() / c as f64))
}

/// Cosine similarity of two embeddings.
pub fn pairwise_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(ClimdError::validation(format!(
            "embedding dimensions differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    validate_embedding(a)?;
    validate_embedding(b)?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    // rounding can push |cos| a hair past 1
    Ok((dot / (norm(a) * norm(b))).clamp(-1.0, 1.0))
}

/// `1 - mean` of the off-diagonal cosine similarities over all ordered pairs.
pub fn complementarity<E: AsRef<[f64]>>(embeddings: &[E]) -> Result<f64> {
    let m = embeddings.len();
    if m < 2 {
        return Err(ClimdError::validation(format!(
            "complementarity needs at least 2 modalities, got {m}"
        )));
    }
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                total += pairwise_similarity(embeddings[i].as_ref(), embeddings[j].as_ref())?;
            }
        }
    }
    Ok(1.0 - total / (m * (m - 1)) as f64)
}

pub fn score_sample(trace: &SampleTrace) -> Result<DifficultyRecord> {
    trace.validate()?;
    let psi = trace
        .modalities
        .iter()
        .map(|m| intra_modal_confidence(&m.probs, trace.label))
        .collect::<Result<Vec<_>>>()?;
    let embeddings: Vec<&[f64]> = trace.modalities.iter().map(|m| m.embedding.as_slice()).collect();
    let phi = complementarity(&embeddings)?;
    let mean_psi = psi.iter().sum::<f64>() / psi.len() as f64;
    Ok(DifficultyRecord {
        sample_id: trace.sample_id.clone(),
        label: trace.label,
        psi,
        phi,
        r: phi + mean_psi,
    })
}

fn check_batch(traces: &[SampleTrace]) -> Result<()> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut duplicates = Vec::new();
    for t in traces {
        let n = seen.entry(t.sample_id.as_str()).or_insert(0);
        *n += 1;
        if *n == 2 {
            duplicates.push(t.sample_id.clone());
        }
    }
    if !duplicates.is_empty() {
        return Err(ClimdError::validation(format!(
            "duplicate sample_id(s): {}",
            duplicates.join(", ")
        )));
    }

    let mut by_classes: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for t in traces {
        by_classes
            .entry(t.num_classes().unwrap_or(0))
            .or_default()
            .push(t.sample_id.as_str());
    }
    if by_classes.len() > 1 {
        let detail: Vec<String> = by_classes
            .iter()
            .map(|(c, ids)| format!("C={c}: {}", ids.join(", ")))
            .collect();
        return Err(ClimdError::validation(format!(
            "traces disagree on class count; {}",
            detail.join("; ")
        )));
    }
    Ok(())
}

/// Scores every trace, preserving input order.
pub fn score_dataset(traces: &[SampleTrace]) -> Result<DifficultyTable> {
    check_batch(traces)?;
    let records = traces.iter().map(score_sample).collect::<Result<Vec<_>>>()?;
    Ok(DifficultyTable { records })
}

/// Same result as [`score_dataset`], scored on the current rayon pool.
pub fn score_dataset_par(traces: &[SampleTrace]) -> Result<DifficultyTable> {
    check_batch(traces)?;
    let records = traces.par_iter().map(score_sample).collect::<Result<Vec<_>>>()?;
    Ok(DifficultyTable { records })
}
