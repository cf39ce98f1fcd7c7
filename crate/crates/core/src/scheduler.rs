//! Per-epoch training subsets.
//!
//! Every class keeps a queue of its samples sorted easy to hard. Epoch `t`
//! draws `S_t = round(t N / T)` samples split across classes by the epoch's
//! target mix, taking a prefix of each queue. The final epoch always uses the
//! whole dataset.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::apportion::apportion;
use crate::distribution::{epoch_target, subset_size, ClassDistribution};
use crate::error::{ClimdError, Result};
use crate::manifest::digest_json;
use crate::measurer::{DifficultyOrder, DifficultyTable};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassQueue {
    pub class_id: usize,
    pub rank: usize,
    /// Sample ids, easiest first.
    pub samples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSubset {
    pub class_id: usize,
    pub rank: usize,
    pub sample_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochPlan {
    pub epoch: usize,
    /// One entry per class in rank order.
    pub subsets: Vec<ClassSubset>,
    /// Presentation order of the whole epoch.
    pub order: Vec<String>,
}

impl EpochPlan {
    pub fn total(&self) -> u64 {
        self.order.len() as u64
    }

    /// Per-class counts in rank order.
    pub fn counts_by_rank(&self) -> Vec<u64> {
        self.subsets.iter().map(|s| s.sample_ids.len() as u64).collect()
    }

    /// Per-class counts indexed by class id.
    pub fn counts_by_class(&self) -> Vec<u64> {
        let mut counts = vec![0; self.subsets.len()];
        for s in &self.subsets {
            counts[s.class_id] = s.sample_ids.len() as u64;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Curriculum,
    RandomBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub kind: ScheduleKind,
    pub seed: Option<u64>,
    pub config_digest: String,
    pub alpha_cap: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub epochs: Vec<EpochPlan>,
    pub provenance: Provenance,
}

impl Schedule {
    pub fn num_epochs(&self) -> usize {
        self.epochs.len()
    }

    /// Total sample visits across all epochs.
    pub fn total_visits(&self) -> u64 {
        self.epochs.iter().map(EpochPlan::total).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleConfig {
    pub epochs: usize,
    pub order: DifficultyOrder,
}

fn compare_difficulty(order: DifficultyOrder, (ra, ida): (f64, &str), (rb, idb): (f64, &str)) -> Ordering {
    let by_r = match order {
        DifficultyOrder::LargerIsEasier => rb.total_cmp(&ra),
        DifficultyOrder::SmallerIsEasier => ra.total_cmp(&rb),
    };
    by_r.then_with(|| ida.cmp(idb))
}

/// One queue per class, in rank order, each sorted easy to hard with ties
/// broken by sample id.
pub fn build_queues(table: &DifficultyTable, dist: &ClassDistribution, order: DifficultyOrder) -> Result<Vec<ClassQueue>> {
    let c = dist.num_classes();
    let mut members: Vec<Vec<(f64, &str)>> = vec![Vec::new(); c];
    for rec in &table.records {
        members
            .get_mut(rec.label)
            .ok_or_else(|| {
                ClimdError::validation(format!(
                    "sample {} has class {} unknown to the distribution ({} classes)",
                    rec.sample_id, rec.label, c
                ))
            })?
            .push((rec.r, rec.sample_id.as_str()));
    }
    Ok(dist
        .classes_by_rank()
        .iter()
        .map(|&class_id| {
            let mut items = std::mem::take(&mut members[class_id]);
            items.sort_by(|a, b| compare_difficulty(order, *a, *b));
            ClassQueue {
                class_id,
                rank: dist.rank_of(class_id),
                samples: items.into_iter().map(|(_, id)| id.to_string()).collect(),
            }
        })
        .collect())
}

fn plan_from_prefixes(epoch: usize, queues: &[ClassQueue], counts: &[u64]) -> EpochPlan {
    let subsets: Vec<ClassSubset> = queues
        .iter()
        .zip(counts)
        .map(|(q, &k)| ClassSubset {
            class_id: q.class_id,
            rank: q.rank,
            sample_ids: q.samples[..k as usize].to_vec(),
        })
        .collect();
    let order = subsets.iter().flat_map(|s| s.sample_ids.iter().cloned()).collect();
    EpochPlan { epoch, subsets, order }
}

/// Curriculum schedule: epoch targets apportioned over class queues.
pub fn build_schedule(table: &DifficultyTable, dist: &ClassDistribution, config: &ScheduleConfig) -> Result<Schedule> {
    let total_epochs = config.epochs;
    if total_epochs == 0 {
        return Err(ClimdError::validation("schedule needs at least one epoch"));
    }
    if table.is_empty() {
        return Err(ClimdError::validation("cannot schedule an empty dataset"));
    }
    let queues = build_queues(table, dist, config.order)?;
    let observed: Vec<u64> = queues.iter().map(|q| q.samples.len() as u64).collect();
    if observed != dist.counts_by_rank() {
        return Err(ClimdError::validation(format!(
            "difficulty table class sizes {:?} (by rank) disagree with the distribution {:?}",
            observed,
            dist.counts_by_rank()
        )));
    }
    let n = table.len() as u64;

    let mut epochs = Vec::with_capacity(total_epochs);
    for t in 1..=total_epochs {
        let counts = if t == total_epochs {
            observed.clone()
        } else {
            let target = epoch_target(t, total_epochs, n, dist)?;
            apportion(&target.q, target.subset_size, &observed)?
        };
        epochs.push(plan_from_prefixes(t, &queues, &counts));
    }

    let digest = digest_json(&serde_json::json!({
        "kind": ScheduleKind::Curriculum,
        "config": config,
        "gamma": dist.gamma(),
        "alpha_cap": dist.alpha_cap(),
        "counts": dist.counts(),
    }));
    Ok(Schedule {
        epochs,
        provenance: Provenance {
            kind: ScheduleKind::Curriculum,
            seed: None,
            config_digest: digest,
            alpha_cap: Some(dist.alpha_cap()),
            gamma: Some(dist.gamma()),
        },
    })
}

/// Sample id and class label, the minimum a baseline schedule needs.
pub type LabeledId = (String, usize);

fn baseline_plan(epoch: usize, order: Vec<String>, labels: &std::collections::HashMap<&str, usize>, class_of_rank: &[usize]) -> EpochPlan {
    let mut subsets: Vec<ClassSubset> = class_of_rank
        .iter()
        .enumerate()
        .map(|(k, &class_id)| ClassSubset {
            class_id,
            rank: k + 1,
            sample_ids: Vec::new(),
        })
        .collect();
    let mut slot_of_class = vec![0; class_of_rank.len()];
    for (k, &c) in class_of_rank.iter().enumerate() {
        slot_of_class[c] = k;
    }
    for id in &order {
        subsets[slot_of_class[labels[id.as_str()]]].sample_ids.push(id.clone());
    }
    EpochPlan { epoch, subsets, order }
}

fn baseline_setup(samples: &[LabeledId], num_classes: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0u64; num_classes];
    for (id, label) in samples {
        *counts.get_mut(*label).ok_or_else(|| {
            ClimdError::validation(format!("sample {id} has label {label} outside {num_classes} classes"))
        })? += 1;
    }
    let mut order: Vec<usize> = (0..num_classes).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    Ok(order)
}

/// Random control arm: epoch `t` is a uniformly random subset of
/// `sizes[t - 1]` samples, presented in random order.
pub fn random_subset_schedule(samples: &[LabeledId], num_classes: usize, sizes: &[u64], seed: u64) -> Result<Schedule> {
    let class_of_rank = baseline_setup(samples, num_classes)?;
    if let Some(&s) = sizes.iter().find(|&&s| s > samples.len() as u64) {
        return Err(ClimdError::Infeasible(format!(
            "epoch size {s} exceeds dataset size {}",
            samples.len()
        )));
    }
    let labels: std::collections::HashMap<&str, usize> =
        samples.iter().map(|(id, l)| (id.as_str(), *l)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<String> = samples.iter().map(|(id, _)| id.clone()).collect();
    let epochs = sizes
        .iter()
        .enumerate()
        .map(|(i, &size)| {
            let (picked, _) = ids.partial_shuffle(&mut rng, size as usize);
            baseline_plan(i + 1, picked.to_vec(), &labels, &class_of_rank)
        })
        .collect();
    let digest = digest_json(&serde_json::json!({
        "kind": ScheduleKind::RandomBaseline,
        "sizes": sizes,
        "seed": seed,
        "n": samples.len(),
    }));
    Ok(Schedule {
        epochs,
        provenance: Provenance {
            kind: ScheduleKind::RandomBaseline,
            seed: Some(seed),
            config_digest: digest,
            alpha_cap: None,
            gamma: None,
        },
    })
}

/// Random control arm with every epoch an independent shuffle of the full dataset.
pub fn random_baseline_schedule(samples: &[LabeledId], num_classes: usize, epochs: usize, seed: u64) -> Result<Schedule> {
    if epochs == 0 {
        return Err(ClimdError::validation("schedule needs at least one epoch"));
    }
    random_subset_schedule(samples, num_classes, &vec![samples.len() as u64; epochs], seed)
}

/// Per-epoch subset sizes `round(t N / T)` for `t = 1..=T`.
pub fn curriculum_sizes(n: u64, epochs: usize) -> Vec<u64> {
    (1..=epochs).map(|t| subset_size(t, epochs, n)).collect()
}
