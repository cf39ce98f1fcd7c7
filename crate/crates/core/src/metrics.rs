//! Accuracy, macro F1 and support-weighted F1 from a confusion matrix.

use serde::Serialize;

use crate::error::{ClimdError, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(num_classes: usize) -> Self {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        if rows.iter().any(|r| r.len() != c) {
            return Err(ClimdError::validation("confusion matrix must be square"));
        }
        Ok(ConfusionMatrix {
            num_classes: c,
            counts: rows.concat(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.num_classes.max(1)).map(<[u64]>::to_vec).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn diagonal(&self) -> u64 {
        (0..self.num_classes).map(|c| self.get(c, c)).sum()
    }

    /// Number of samples whose true class is `c`.
    pub fn support(&self, c: usize) -> u64 {
        (0..self.num_classes).map(|p| self.get(c, p)).sum()
    }

    fn predicted(&self, c: usize) -> u64 {
        (0..self.num_classes).map(|t| self.get(t, c)).sum()
    }

    /// Per-class F1, 0 where precision + recall is 0 or undefined.
    pub fn per_class_f1(&self) -> Vec<f64> {
        (0..self.num_classes)
            .map(|c| {
                let tp = self.get(c, c) as f64;
                let support = self.support(c) as f64;
                let predicted = self.predicted(c) as f64;
                // 2PR/(P+R) reduces to 2tp/(support + predicted)
                if tp == 0.0 {
                    0.0
                } else {
                    2.0 * tp / (support + predicted)
                }
            })
            .collect()
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.total() == 0 {
            return Err(ClimdError::UndefinedMetric("confusion matrix is empty".into()));
        }
        Ok(())
    }
}

pub fn confusion(truth: &[usize], predicted: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(ClimdError::validation(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(num_classes);
    for (i, (&t, &p)) in truth.iter().zip(predicted).enumerate() {
        if t >= num_classes || p >= num_classes {
            return Err(ClimdError::validation(format!(
                "entry {i}: labels ({t}, {p}) outside {num_classes} classes"
            )));
        }
        cm.counts[t * num_classes + p] += 1;
    }
    Ok(cm)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    cm.check_nonempty()?;
    Ok(cm.diagonal() as f64 / cm.total() as f64)
}

pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    cm.check_nonempty()?;
    let f1 = cm.per_class_f1();
    Ok(f1.iter().sum::<f64>() / f1.len() as f64)
}

pub fn weighted_f1(cm: &ConfusionMatrix) -> Result<f64> {
    cm.check_nonempty()?;
    let weighted: f64 = cm
        .per_class_f1()
        .iter()
        .enumerate()
        .map(|(c, f)| f * cm.support(c) as f64)
        .sum();
    Ok(weighted / cm.total() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scores {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub macro_f1: f64,
}

impl Scores {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        Ok(Scores {
            accuracy: accuracy(cm)?,
            weighted_f1: weighted_f1(cm)?,
            macro_f1: macro_f1(cm)?,
        })
    }
}
