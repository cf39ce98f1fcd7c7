use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::ClassDistribution;
use crate::error::{ClimdError, Result};
use crate::measurer::score_dataset;
use crate::metrics::Scores;
use crate::scheduler::{build_schedule, curriculum_sizes, random_baseline_schedule, random_subset_schedule, ScheduleConfig};
use crate::simlab::data::{generate_dataset, SyntheticSpec};
use crate::simlab::model::FusionModel;
use crate::simlab::seeded_rng;
use crate::simlab::train::{collect_traces, train_from, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// `spec.seed` is the first seed; seed `i` runs with `spec.seed + i`.
    pub spec: SyntheticSpec,
    pub train: TrainConfig,
    pub n_seeds: usize,
    /// Per-class test size as a fraction of the smallest class.
    pub test_fraction: f64,
}

impl Default for ExperimentConfig {
    /// Desk-scale comparison: 5 classes, 3 modalities, 2000 samples with a
    /// 1.5 rank exponent, 10 seeds.
    fn default() -> Self {
        ExperimentConfig {
            spec: SyntheticSpec::default(),
            train: TrainConfig {
                learning_rate: 0.02,
                epochs: 20,
                ..TrainConfig::default()
            },
            n_seeds: 10,
            test_fraction: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArmResult {
    pub scores: Scores,
    pub visits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub alpha_cap: f64,
    pub degenerate: bool,
    pub curriculum: ArmResult,
    pub baseline: ArmResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub seeds: Vec<SeedResult>,
    pub mean_curriculum: Scores,
    pub mean_baseline: Scores,
    /// Seeds where the curriculum arm's macro F1 is strictly higher.
    pub curriculum_wins: usize,
}

impl ComparisonReport {
    fn new(seeds: Vec<SeedResult>) -> Self {
        let mean = |f: &dyn Fn(&SeedResult) -> Scores| {
            let n = seeds.len() as f64;
            Scores {
                accuracy: seeds.iter().map(|s| f(s).accuracy).sum::<f64>() / n,
                weighted_f1: seeds.iter().map(|s| f(s).weighted_f1).sum::<f64>() / n,
                macro_f1: seeds.iter().map(|s| f(s).macro_f1).sum::<f64>() / n,
            }
        };
        ComparisonReport {
            mean_curriculum: mean(&|s| s.curriculum.scores),
            mean_baseline: mean(&|s| s.baseline.scores),
            curriculum_wins: seeds
                .iter()
                .filter(|s| s.curriculum.scores.macro_f1 > s.baseline.scores.macro_f1)
                .count(),
            seeds,
        }
    }

    /// One row per seed and arm, then one `mean` row per arm.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,arm,accuracy,weighted_f1,macro_f1,visits,alpha_cap\n");
        let row = |seed: &str, arm: &str, s: &Scores, visits: String, alpha: String| {
            format!("{seed},{arm},{},{},{},{visits},{alpha}\n", s.accuracy, s.weighted_f1, s.macro_f1)
        };
        for s in &self.seeds {
            out += &row(&s.seed.to_string(), "curriculum", &s.curriculum.scores, s.curriculum.visits.to_string(), s.alpha_cap.to_string());
            out += &row(&s.seed.to_string(), "random", &s.baseline.scores, s.baseline.visits.to_string(), String::new());
        }
        out += &row("mean", "curriculum", &self.mean_curriculum, String::new(), String::new());
        out += &row("mean", "random", &self.mean_baseline, String::new(), String::new());
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "macro-F1 curriculum {:.4} vs random {:.4}; accuracy {:.4} vs {:.4}; weighted-F1 {:.4} vs {:.4}; curriculum wins {}/{} seeds",
            self.mean_curriculum.macro_f1,
            self.mean_baseline.macro_f1,
            self.mean_curriculum.accuracy,
            self.mean_baseline.accuracy,
            self.mean_curriculum.weighted_f1,
            self.mean_baseline.weighted_f1,
            self.curriculum_wins,
            self.seeds.len()
        )
    }
}

/// One seed: warm up a probe model on uniform full-data epochs, score its
/// traces, fit the class distribution and build the curriculum. Both arms
/// then train from the same fresh initialization with equal sample budgets.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedResult> {
    let spec = SyntheticSpec { seed, ..config.spec.clone() };
    let train_cfg = TrainConfig { seed, ..config.train.clone() };
    train_cfg.validate()?;

    let data = generate_dataset(&spec)?;
    let n_min = *data.class_counts().iter().min().expect("at least two classes") as f64;
    let per_class = ((config.test_fraction * n_min).floor() as usize).max(1);
    let (train_set, test_set) = data.stratified_split(per_class, seed)?;
    let ids = train_set.labeled_ids();

    let init = FusionModel::new(&train_set.dims, train_cfg.hidden, train_set.num_classes, &mut seeded_rng(seed, "init"));

    let warmup = random_baseline_schedule(&ids, train_set.num_classes, train_cfg.warmup(), seed ^ 0x5741_524d)?;
    let probe = train_from(init.clone(), &train_set, None, &warmup, &train_cfg)?;
    let traces = collect_traces(&probe.model, &train_set)?;
    let table = score_dataset(&traces)?;
    let dist = ClassDistribution::from_labels(&train_set.labels(), train_set.num_classes, train_cfg.gamma)?;

    let curriculum = build_schedule(
        &table,
        &dist,
        &ScheduleConfig {
            epochs: train_cfg.epochs,
            order: train_cfg.order,
        },
    )?;
    let sizes = curriculum_sizes(train_set.len() as u64, train_cfg.epochs);
    let baseline = random_subset_schedule(&ids, train_set.num_classes, &sizes, seed ^ 0x5241_4e44)?;

    let run_c = train_from(init.clone(), &train_set, Some(&test_set), &curriculum, &train_cfg)?;
    let run_b = train_from(init, &train_set, Some(&test_set), &baseline, &train_cfg)?;
    let final_scores = |run: &crate::simlab::train::TrainingRun| {
        run.final_scores()
            .ok_or_else(|| ClimdError::validation("training produced no epochs"))
    };
    Ok(SeedResult {
        seed,
        train_size: train_set.len(),
        test_size: test_set.len(),
        alpha_cap: dist.alpha_cap(),
        degenerate: dist.fit().is_degenerate(),
        curriculum: ArmResult {
            scores: final_scores(&run_c)?,
            visits: run_c.total_visits(),
        },
        baseline: ArmResult {
            scores: final_scores(&run_b)?,
            visits: run_b.total_visits(),
        },
    })
}

/// Runs `config.n_seeds` seeds on the current rayon pool; results are in
/// seed order regardless of scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ComparisonReport> {
    if config.n_seeds == 0 {
        return Err(ClimdError::validation("need at least one seed"));
    }
    if !(config.test_fraction > 0.0 && config.test_fraction < 1.0) {
        return Err(ClimdError::validation("test fraction must lie in (0, 1)"));
    }
    config.spec.validate()?;
    let seeds = (0..config.n_seeds as u64)
        .into_par_iter()
        .map(|i| run_seed(config, config.spec.seed + i))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport::new(seeds))
}
