use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::DEFAULT_GAMMA;
use crate::error::{ClimdError, Result};
use crate::measurer::{DifficultyOrder, ModalityOutput, SampleTrace};
use crate::metrics::{confusion, Scores};
use crate::scheduler::{EpochPlan, Schedule};
use crate::simlab::data::Dataset;
use crate::simlab::model::FusionModel;
use crate::simlab::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Uniform epochs before trace collection; `None` means `max(1, epochs / 10)`.
    pub warmup_epochs: Option<usize>,
    pub batch_size: usize,
    pub hidden: usize,
    pub seed: u64,
    pub gamma: f64,
    pub order: DifficultyOrder,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-5,
            epochs: 100,
            warmup_epochs: None,
            batch_size: 32,
            hidden: 16,
            seed: 0,
            gamma: DEFAULT_GAMMA,
            order: DifficultyOrder::LargerIsEasier,
        }
    }
}

impl TrainConfig {
    pub fn warmup(&self) -> usize {
        self.warmup_epochs.unwrap_or((self.epochs / 10).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(ClimdError::validation("epochs must be >= 1"));
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return Err(ClimdError::validation("batch size and hidden width must be >= 1"));
        }
        if !(self.gamma > 0.0) {
            return Err(ClimdError::validation("gamma must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ClimdError::validation("learning rate must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub visits: u64,
    pub mean_loss: f64,
    /// Held-out scores after the epoch, when a test set was given.
    pub test: Option<Scores>,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub model: FusionModel,
    pub log: Vec<EpochLog>,
}

impl TrainingRun {
    pub fn total_visits(&self) -> u64 {
        self.log.iter().map(|l| l.visits).sum()
    }

    pub fn final_scores(&self) -> Option<Scores> {
        self.log.last().and_then(|l| l.test)
    }
}

/// Dataset indices of one epoch's samples, shuffled.
pub fn epoch_order(plan: &EpochPlan, index: &HashMap<&str, usize>, rng: &mut impl Rng) -> Result<Vec<usize>> {
    let mut order = plan
        .order
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| ClimdError::validation(format!("epoch {} references unknown sample {id}", plan.epoch)))
        })
        .collect::<Result<Vec<_>>>()?;
    order.shuffle(rng);
    Ok(order)
}

pub fn evaluate(model: &FusionModel, dataset: &Dataset) -> Result<Scores> {
    let truth = dataset.labels();
    let predicted = dataset
        .samples
        .iter()
        .map(|s| model.predict(&s.features))
        .collect::<Result<Vec<_>>>()?;
    Scores::from_confusion(&confusion(&truth, &predicted, dataset.num_classes)?)
}

/// Trains a freshly initialized model (seeded by `config.seed`).
pub fn train(dataset: &Dataset, test: Option<&Dataset>, schedule: &Schedule, config: &TrainConfig) -> Result<TrainingRun> {
    let model = FusionModel::new(
        &dataset.dims,
        config.hidden,
        dataset.num_classes,
        &mut seeded_rng(config.seed, "init"),
    );
    train_from(model, dataset, test, schedule, config)
}

/// Mini-batch gradient descent over `schedule`, epoch `t` visiting exactly
/// the samples of plan `t` in a seeded random order.
pub fn train_from(
    mut model: FusionModel,
    dataset: &Dataset,
    test: Option<&Dataset>,
    schedule: &Schedule,
    config: &TrainConfig,
) -> Result<TrainingRun> {
    config.validate()?;
    let index: HashMap<&str, usize> = dataset.samples.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    // resolve every epoch up front so a bad id fails before any update
    for plan in &schedule.epochs {
        if let Some(id) = plan.order.iter().find(|id| !index.contains_key(id.as_str())) {
            return Err(ClimdError::validation(format!(
                "schedule epoch {} references unknown sample {id}",
                plan.epoch
            )));
        }
    }

    let mut rng = seeded_rng(config.seed, "epoch-shuffle");
    let mut log = Vec::with_capacity(schedule.epochs.len());
    for plan in &schedule.epochs {
        let order = epoch_order(plan, &index, &mut rng)?;
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&[Vec<f64>], usize)> = chunk
                .iter()
                .map(|&i| (dataset.samples[i].features.as_slice(), dataset.samples[i].label))
                .collect();
            let (loss, grad) = model.loss_and_grad(&batch)?;
            loss_sum += loss * chunk.len() as f64;
            if config.learning_rate != 0.0 {
                model.step(&grad, config.learning_rate);
            }
        }
        let visits = order.len() as u64;
        log.push(EpochLog {
            epoch: plan.epoch,
            visits,
            mean_loss: if visits == 0 { 0.0 } else { loss_sum / visits as f64 },
            test: test.map(|t| evaluate(&model, t)).transpose()?,
        });
    }
    Ok(TrainingRun { model, log })
}

/// Per-modality auxiliary probabilities and encoder embeddings for every sample.
pub fn collect_traces(model: &FusionModel, dataset: &Dataset) -> Result<Vec<SampleTrace>> {
    dataset
        .samples
        .iter()
        .map(|s| {
            let pass = model.forward(&s.features)?;
            Ok(SampleTrace {
                sample_id: s.id.clone(),
                label: s.label,
                modalities: pass
                    .modality_probs
                    .into_iter()
                    .zip(pass.embeddings)
                    .map(|(probs, embedding)| ModalityOutput { probs, embedding })
                    .collect(),
            })
        })
        .collect()
}
