//! Class-distribution-guided curriculum scheduling for imbalanced
//! multimodal classification.
//!
//! Pipeline: [`measurer`] scores sample difficulty from model traces,
//! [`distribution`] fits class sizes to a power law and derives per-epoch
//! class targets, [`scheduler`] turns both into concrete epoch subsets.
//! [`simlab`] closes the loop on synthetic data and [`metrics`] scores the
//! result.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {})", $tol);
    }};
}

pub mod apportion;
pub mod cli;
pub mod distribution;
pub mod error;
pub mod io;
pub mod manifest;
pub mod measurer;
pub mod metrics;
pub mod scheduler;
pub mod simlab;

pub use apportion::apportion;
pub use distribution::{
    alpha_schedule, epoch_target, fit_alpha, powerlaw_pdf, AlphaFit, ClassDistribution, EpochTarget, DEFAULT_GAMMA,
};
pub use error::{ClimdError, Result};
pub use measurer::{
    complementarity, intra_modal_confidence, pairwise_similarity, score_dataset, score_sample, DifficultyOrder,
    DifficultyRecord, DifficultyTable, ModalityOutput, SampleTrace,
};
pub use metrics::{accuracy, confusion, macro_f1, weighted_f1, ConfusionMatrix, Scores};
pub use scheduler::{
    build_queues, build_schedule, random_baseline_schedule, ClassQueue, EpochPlan, Schedule, ScheduleConfig,
};
