//! `climd` command-line interface.
//!
//! Every command validates all inputs before writing anything, writes only
//! inside its `--out` directory and leaves exactly one `manifest.json` there.
//! Exit codes: 0 success, 1 validation error, 2 infeasible schedule, 3 I/O error.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::distribution::{balanced_fallback, epoch_target, rank_powerlaw, AlphaFit, ClassDistribution, DEFAULT_GAMMA};
use crate::error::{ClimdError, Result};
use crate::io;
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::measurer::{score_dataset_par, DifficultyOrder};
use crate::metrics::{confusion, Scores};
use crate::scheduler::{build_schedule, random_baseline_schedule, Schedule, ScheduleConfig};
use crate::simlab::{self, ExperimentConfig, SyntheticSpec, TrainConfig};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "CLIMD_THREADS";

#[derive(Debug, Parser)]
#[command(name = "climd", version, about = "Class-distribution-guided curriculum scheduling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the class-size power law to a labels file.
    Fit(FitArgs),
    /// Score sample difficulty from a trace file.
    Score(ScoreArgs),
    /// Build a per-epoch curriculum from difficulty scores and a distribution report.
    Schedule(ScheduleArgs),
    /// Run the synthetic curriculum-vs-random comparison.
    Simulate(SimulateArgs),
    /// Compute accuracy, weighted F1 and macro F1 from a predictions file.
    Eval(EvalArgs),
    /// Reproduce the 1000-sample, 10-epoch, 10-class example schedule.
    Figure2(Figure2Args),
    /// Score, fit and schedule in one go, from a trace file or a synthetic dataset.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV of `sample_id,label`.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Imbalance cap used when all classes are the same size [default: 1 + 1/gamma].
    #[arg(long)]
    pub alpha_balanced: Option<f64>,
    /// Number of classes; defaults to the largest label + 1.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// JSON-lines trace file.
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Difficulty table written by `score`.
    #[arg(long)]
    pub difficulty: PathBuf,
    /// Distribution report written by `fit`.
    #[arg(long)]
    pub distribution: PathBuf,
    #[arg(long)]
    pub epochs: usize,
    #[arg(long, default_value_t = DifficultyOrder::LargerIsEasier)]
    pub order: DifficultyOrder,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 3)]
    pub modalities: usize,
    /// Feature dimension per modality: one value for all, or one per modality.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 1.5)]
    pub imbalance: f64,
    #[arg(long, default_value_t = 0.3)]
    pub redundancy: f64,
    #[arg(long, default_value_t = 2.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Warm-up epochs before trace collection [default: max(1, epochs/10)].
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long, default_value_t = 0.02)]
    pub lr: f64,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    #[arg(long, default_value_t = DifficultyOrder::LargerIsEasier)]
    pub order: DifficultyOrder,
    /// Number of seeds.
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.3)]
    pub test_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// CSV of `sample_id,true,pred`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Number of classes; defaults to the largest label + 1.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Figure2Args {
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Trace file to schedule; omit to generate a synthetic dataset and warm-up traces.
    #[arg(long)]
    pub traces: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, default_value_t = DifficultyOrder::LargerIsEasier)]
    pub order: DifficultyOrder,
    /// Synthetic dataset size.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 3)]
    pub modalities: usize,
    #[arg(long, default_value_t = 1.5)]
    pub imbalance: f64,
    /// Warm-up epochs for the synthetic probe model.
    #[arg(long, default_value_t = 2)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `CLIMD_THREADS` and runs `f` on a pool of that size (rayon's
/// default when unset).
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| ClimdError::validation(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ClimdError::validation(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| ClimdError::Stage {
        stage: name.to_string(),
        source: Box::new(e),
    })
}

/// Files to write, collected so nothing lands on disk until every stage succeeded.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    fn commit(self, manifest: &RunManifest) -> Result<()> {
        for (name, contents) in &self.files {
            io::write_output(&self.dir, name, contents)?;
        }
        io::write_output(&self.dir, MANIFEST_FILE, &manifest.to_json())?;
        Ok(())
    }
}

fn infer_classes(labels: impl Iterator<Item = usize>, given: Option<usize>) -> Result<usize> {
    let max = labels.max();
    match (given, max) {
        (Some(c), Some(m)) if m >= c => Err(ClimdError::validation(format!("label {m} outside {c} classes"))),
        (Some(c), _) => Ok(c),
        (None, Some(m)) => Ok(m + 1),
        (None, None) => Err(ClimdError::validation("input has no records")),
    }
}

fn check_unique_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    let dups: Vec<&str> = ids.filter(|id| !seen.insert(*id)).collect();
    if !dups.is_empty() {
        return Err(ClimdError::validation(format!("duplicate sample_id(s): {}", dups.join(", "))));
    }
    Ok(())
}

pub fn cmd_fit(args: &FitArgs, stdout: &mut dyn Write) -> Result<()> {
    let labels = io::read_labels(&args.labels)?;
    check_unique_ids(labels.iter().map(|(id, _)| id.as_str()))?;
    let classes = infer_classes(labels.iter().map(|l| l.1), args.classes)?;
    let label_ids: Vec<usize> = labels.iter().map(|l| l.1).collect();
    let fallback = args.alpha_balanced.unwrap_or_else(|| balanced_fallback(args.gamma));
    let mut counts = vec![0u64; classes];
    for &l in &label_ids {
        counts[l] += 1;
    }
    let dist = ClassDistribution::with_fallback(counts, args.gamma, fallback)?;
    let summary = io::distribution_summary(&dist);
    if let Some(out) = &args.out {
        let mut manifest = RunManifest::new(
            "fit",
            json!({"gamma": args.gamma, "alpha_balanced": fallback, "classes": classes}),
            vec![],
        );
        manifest.add_input(&args.labels)?;
        let mut files = Outputs::new(out);
        files.add("distribution.csv", io::format_distribution(&dist));
        files.add("distribution.txt", summary.clone());
        files.commit(&manifest)?;
    }
    emit(stdout, &summary)
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<()> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| ClimdError::io("writing to stdout", e))
}

pub fn cmd_score(args: &ScoreArgs, stdout: &mut dyn Write) -> Result<()> {
    let traces = io::read_traces(&args.traces)?;
    let table = with_thread_cap(|| score_dataset_par(&traces))??;
    let mut manifest = RunManifest::new("score", json!({}), vec![]);
    manifest.add_input(&args.traces)?;
    let mut files = Outputs::new(&args.out);
    files.add("difficulty.csv", io::format_difficulty(&table));
    files.commit(&manifest)?;
    emit(stdout, &format!("scored {} samples -> {}\n", table.len(), args.out.join("difficulty.csv").display()))
}

fn schedule_outputs(files: &mut Outputs, schedule: &Schedule) {
    files.add("schedule.csv", io::format_schedule(schedule));
    files.add("schedule_summary.csv", io::format_schedule_summary(schedule));
}

pub fn cmd_schedule(args: &ScheduleArgs, stdout: &mut dyn Write) -> Result<()> {
    let table = io::read_difficulty(&args.difficulty)?;
    let dist = io::read_distribution(&args.distribution)?;
    let config = ScheduleConfig {
        epochs: args.epochs,
        order: args.order,
    };
    let schedule = build_schedule(&table, &dist, &config)?;
    let mut manifest = RunManifest::new(
        "schedule",
        json!({"epochs": args.epochs, "order": args.order, "schedule_digest": schedule.provenance.config_digest}),
        vec![],
    );
    manifest.add_input(&args.difficulty)?;
    manifest.add_input(&args.distribution)?;
    let mut files = Outputs::new(&args.out);
    schedule_outputs(&mut files, &schedule);
    let summary = io::format_schedule_summary(&schedule);
    files.commit(&manifest)?;
    emit(stdout, &summary)
}

fn expand_dims(dims: &[usize], modalities: usize) -> Result<Vec<usize>> {
    match dims.len() {
        1 => Ok(vec![dims[0]; modalities]),
        n if n == modalities => Ok(dims.to_vec()),
        n => Err(ClimdError::validation(format!("--dims has {n} values for {modalities} modalities"))),
    }
}

pub fn simulate_config(args: &SimulateArgs) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        spec: SyntheticSpec {
            classes: args.classes,
            modalities: args.modalities,
            dims: expand_dims(&args.dims, args.modalities)?,
            n: args.n,
            imbalance_exponent: args.imbalance,
            class_separation: args.separation,
            noise_scale: args.noise,
            redundancy: args.redundancy,
            seed: args.seed,
        },
        train: TrainConfig {
            learning_rate: args.lr,
            epochs: args.epochs,
            warmup_epochs: args.warmup,
            batch_size: args.batch_size,
            hidden: args.hidden,
            seed: args.seed,
            gamma: args.gamma,
            order: args.order,
        },
        n_seeds: args.seeds,
        test_fraction: args.test_fraction,
    })
}

pub fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<()> {
    let config = simulate_config(args)?;
    let report = with_thread_cap(|| simlab::run_experiment(&config))??;
    let seeds = (0..config.n_seeds as u64).map(|i| config.spec.seed + i).collect();
    let manifest = RunManifest::new(
        "simulate",
        serde_json::to_value(&config).expect("config serializes"),
        seeds,
    );
    let mut files = Outputs::new(&args.out);
    files.add("report.csv", report.to_csv());
    files.commit(&manifest)?;
    emit(stdout, &format!("{}\n", report.summary()))
}

pub fn cmd_eval(args: &EvalArgs, stdout: &mut dyn Write) -> Result<()> {
    let preds = io::read_predictions(&args.predictions)?;
    let classes = infer_classes(preds.iter().flat_map(|p| [p.truth, p.predicted]), args.classes)?;
    let truth: Vec<usize> = preds.iter().map(|p| p.truth).collect();
    let predicted: Vec<usize> = preds.iter().map(|p| p.predicted).collect();
    let cm = confusion(&truth, &predicted, classes)?;
    let scores = Scores::from_confusion(&cm)?;

    let mut text = format!(
        "metric,value\naccuracy,{}\nweighted_f1,{}\nmacro_f1,{}\n",
        scores.accuracy, scores.weighted_f1, scores.macro_f1
    );
    text.push_str("\nconfusion (rows = true, columns = predicted)\n");
    let mut cm_csv = String::from("true\\pred");
    for c in 0..classes {
        write!(cm_csv, ",{c}").unwrap();
    }
    cm_csv.push('\n');
    for (t, row) in cm.rows().iter().enumerate() {
        write!(cm_csv, "{t}").unwrap();
        for v in row {
            write!(cm_csv, ",{v}").unwrap();
        }
        cm_csv.push('\n');
    }
    text.push_str(&cm_csv);

    if let Some(out) = &args.out {
        let mut manifest = RunManifest::new("eval", json!({"classes": classes}), vec![]);
        manifest.add_input(&args.predictions)?;
        let mut files = Outputs::new(out);
        files.add(
            "metrics.csv",
            format!(
                "metric,value\naccuracy,{}\nweighted_f1,{}\nmacro_f1,{}\n",
                scores.accuracy, scores.weighted_f1, scores.macro_f1
            ),
        );
        files.add("confusion.csv", cm_csv);
        files.commit(&manifest)?;
    }
    emit(stdout, &text)
}

/// Parameters of the example schedule: 1000 samples, 10 epochs, 10 classes,
/// final imbalance parameter 5 and gamma 0.3.
pub const FIGURE2_N: u64 = 1000;
pub const FIGURE2_EPOCHS: usize = 10;
pub const FIGURE2_CLASSES: usize = 10;
pub const FIGURE2_ALPHA: f64 = 5.0;

/// The example schedule and its per-epoch targets. Class sizes are the
/// final-epoch target law apportioned over 1000 samples.
pub fn figure2() -> Result<(Schedule, Vec<Vec<f64>>)> {
    let gamma = DEFAULT_GAMMA;
    let law = rank_powerlaw(FIGURE2_CLASSES, gamma * FIGURE2_ALPHA);
    let counts = crate::apportion::apportion(&law, FIGURE2_N, &vec![FIGURE2_N; FIGURE2_CLASSES])?;
    let dist = ClassDistribution::from_parts(counts.clone(), gamma, AlphaFit::Fitted { alpha_hat: FIGURE2_ALPHA })?;

    // every sample equally hard; queues then follow sample id order
    let mut records = Vec::new();
    for (c, &n) in counts.iter().enumerate() {
        for i in 0..n {
            records.push(crate::measurer::DifficultyRecord {
                sample_id: format!("c{c:02}-{i:04}"),
                label: c,
                psi: vec![0.5, 0.5],
                phi: 0.0,
                r: 0.5,
            });
        }
    }
    let table = crate::measurer::DifficultyTable { records };
    let schedule = build_schedule(
        &table,
        &dist,
        &ScheduleConfig {
            epochs: FIGURE2_EPOCHS,
            order: DifficultyOrder::LargerIsEasier,
        },
    )?;
    let targets = (1..=FIGURE2_EPOCHS)
        .map(|t| epoch_target(t, FIGURE2_EPOCHS, FIGURE2_N, &dist).map(|e| e.q))
        .collect::<Result<Vec<_>>>()?;
    Ok((schedule, targets))
}

pub fn format_targets(targets: &[Vec<f64>]) -> String {
    let c = targets.first().map(Vec::len).unwrap_or(0);
    let mut out = String::from("epoch");
    for k in 1..=c {
        write!(out, ",rank_{k}").unwrap();
    }
    out.push('\n');
    for (t, q) in targets.iter().enumerate() {
        write!(out, "{}", t + 1).unwrap();
        for v in q {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn cmd_figure2(args: &Figure2Args, stdout: &mut dyn Write) -> Result<()> {
    let (schedule, targets) = figure2()?;
    let summary = io::format_schedule_summary(&schedule);
    if let Some(out) = &args.out {
        let manifest = RunManifest::new(
            "figure2",
            json!({"n": FIGURE2_N, "epochs": FIGURE2_EPOCHS, "classes": FIGURE2_CLASSES, "alpha_cap": FIGURE2_ALPHA, "gamma": DEFAULT_GAMMA}),
            vec![],
        );
        let mut files = Outputs::new(out);
        files.add("figure2.csv", summary.clone());
        files.add("figure2_targets.csv", format_targets(&targets));
        files.commit(&manifest)?;
    }
    emit(stdout, &summary)
}

pub fn cmd_pipeline(args: &PipelineArgs, stdout: &mut dyn Write) -> Result<()> {
    let mut files = Outputs::new(&args.out);
    let mut manifest_inputs = Vec::new();
    let mut seeds = Vec::new();
    let traces = match &args.traces {
        Some(path) => {
            manifest_inputs.push(path.clone());
            stage("load traces", io::read_traces(path))?
        }
        None => {
            seeds.push(args.seed);
            let traces = stage("simulate", synthetic_traces(args))?;
            files.add("traces.jsonl", io::format_traces(&traces));
            traces
        }
    };
    let table = stage("score", with_thread_cap(|| score_dataset_par(&traces)).and_then(|r| r))?;
    let dist = stage("fit", {
        let classes = traces.first().and_then(|t| t.num_classes()).unwrap_or(0);
        let labels: Vec<usize> = traces.iter().map(|t| t.label).collect();
        ClassDistribution::from_labels(&labels, classes, args.gamma)
    })?;
    let schedule = stage(
        "schedule",
        build_schedule(
            &table,
            &dist,
            &ScheduleConfig {
                epochs: args.epochs,
                order: args.order,
            },
        ),
    )?;

    files.add("difficulty.csv", io::format_difficulty(&table));
    files.add("distribution.csv", io::format_distribution(&dist));
    schedule_outputs(&mut files, &schedule);

    let config = json!({
        "epochs": args.epochs,
        "gamma": args.gamma,
        "order": args.order,
        "synthetic": args.traces.is_none().then(|| json!({
            "n": args.n, "classes": args.classes, "modalities": args.modalities,
            "imbalance": args.imbalance, "warmup": args.warmup, "lr": args.lr,
        })),
    });
    let mut manifest = RunManifest::new("pipeline", config, seeds);
    for p in &manifest_inputs {
        manifest.add_input(p)?;
    }
    files.commit(&manifest)?;
    emit(
        stdout,
        &format!(
            "{}{} epochs scheduled -> {}\n",
            io::distribution_summary(&dist),
            schedule.num_epochs(),
            args.out.display()
        ),
    )
}

fn synthetic_traces(args: &PipelineArgs) -> Result<Vec<crate::measurer::SampleTrace>> {
    let spec = SyntheticSpec {
        classes: args.classes,
        modalities: args.modalities,
        dims: vec![8; args.modalities],
        n: args.n,
        imbalance_exponent: args.imbalance,
        seed: args.seed,
        ..SyntheticSpec::default()
    };
    let data = simlab::generate_dataset(&spec)?;
    let cfg = TrainConfig {
        learning_rate: args.lr,
        epochs: args.warmup.max(1),
        seed: args.seed,
        gamma: args.gamma,
        ..TrainConfig::default()
    };
    let warmup = random_baseline_schedule(&data.labeled_ids(), data.num_classes, args.warmup.max(1), args.seed)?;
    let probe = simlab::train(&data, None, &warmup, &cfg)?;
    simlab::collect_traces(&probe.model, &data)
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a, stdout),
        Command::Score(a) => cmd_score(a, stdout),
        Command::Schedule(a) => cmd_schedule(a, stdout),
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Eval(a) => cmd_eval(a, stdout),
        Command::Figure2(a) => cmd_figure2(a, stdout),
        Command::Pipeline(a) => cmd_pipeline(a, stdout),
    }
}
