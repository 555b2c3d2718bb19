//! Runs configs end to end and aggregates seed sweeps.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use halypo_core::lyapunov::SmoothnessEstimate;
use halypo_core::{
    run_trajectory, summarize, MechanismSummary, RunFailure, StepRecord, SummaryThresholds,
    TrajectoryLog,
};

use crate::config::{ConfigError, RunConfig, Theta0};
use crate::persist::PersistError;
use crate::plot::PlotError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    /// The optimizer loop failed mid-run; the partial trajectory survives.
    #[error("{0}")]
    Run(Box<RunFailure>),
}

/// Everything one run produced, ready for JSON. Deliberately excludes wall
/// time so re-running a config yields a byte-identical document; timing is
/// reported out of band.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentLog {
    pub schema_version: u32,
    pub fingerprint: String,
    pub config: RunConfig,
    pub summary: MechanismSummary,
    /// Subsampled by `log_every`; the final step record always survives.
    pub records: Vec<StepRecord>,
    pub final_theta: Vec<f64>,
    #[serde(rename = "final_V")]
    pub final_v: f64,
    #[serde(rename = "final_J_team")]
    pub final_j_team: f64,
    pub smoothness: Option<SmoothnessEstimate>,
    pub field_evals: u64,
}

fn subsample(records: &[StepRecord], log_every: usize) -> Vec<StepRecord> {
    let last = records.len().saturating_sub(1);
    records
        .iter()
        .enumerate()
        .filter(|(i, _)| i % log_every == 0 || *i == last)
        .map(|(_, r)| r.clone())
        .collect()
}

fn assemble(config: &RunConfig, log: TrajectoryLog) -> ExperimentLog {
    // Summarize from the full-resolution trajectory, then thin the records.
    let summary = summarize(&log, &SummaryThresholds::default());
    ExperimentLog {
        schema_version: SCHEMA_VERSION,
        fingerprint: config.fingerprint(),
        config: config.clone(),
        summary,
        records: subsample(&log.records, config.log_every),
        final_theta: log.final_theta,
        final_v: log.final_v,
        final_j_team: log.final_j_team,
        smoothness: log.smoothness,
        field_evals: log.field_evals,
    }
}

/// Validates, runs, and summarizes one config. The returned duration is the
/// optimizer loop only (config parsing and summarizing excluded).
pub fn run_experiment(config: &RunConfig) -> Result<(ExperimentLog, Duration), HarnessError> {
    let game = config.validate()?;
    let dim = game.as_game().layout().dim();
    let theta0 = config.theta0.realize(dim)?;
    let start = Instant::now();
    let log = run_trajectory(&game, &theta0, &config.optimizer, config.n_steps)
        .map_err(HarnessError::Run)?;
    let elapsed = start.elapsed();
    Ok((assemble(config, log), elapsed))
}

/// Mean and population standard deviation over sweep runs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(MeanStd { mean, std: var.sqrt(), n: values.len() })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub fingerprint: String,
    /// Present on success.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<MechanismSummary>,
    #[serde(rename = "final_V", skip_serializing_if = "Option::is_none")]
    pub final_v: Option<f64>,
    /// Present on failure.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Cross-seed statistics over the successful runs. Optional metrics
/// aggregate only the seeds where they were defined.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepAggregate {
    #[serde(rename = "steady_state_V")]
    pub steady_state_v: MeanStd,
    pub mean_alignment: Option<MeanStd>,
    pub gcr: MeanStd,
    pub gap_decay_rate: Option<MeanStd>,
    /// Seeds whose run crossed the convergence threshold.
    pub converged: usize,
    pub n_runs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    /// Fingerprint of the base config before seed substitution.
    pub base_fingerprint: String,
    pub per_seed: Vec<SeedOutcome>,
    pub n_failures: usize,
    /// `None` when every seed failed.
    pub aggregate: Option<SweepAggregate>,
}

fn with_seed(base: &RunConfig, seed: u64) -> RunConfig {
    let mut cfg = base.clone();
    if let Theta0::RandomGaussian { scale, .. } = cfg.theta0 {
        cfg.theta0 = Theta0::RandomGaussian { scale, seed };
    }
    cfg
}

/// Re-runs `base` once per seed (in parallel, in stable seed order). Seeds
/// replace the Gaussian theta0 seed; an explicit theta0 makes every run
/// identical, which is useful as a determinism check.
pub fn sweep(base: &RunConfig, seeds: &[u64]) -> Result<SweepReport, HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::Config(ConfigError::Invalid(
            "sweep needs at least one seed".into(),
        )));
    }
    base.validate()?;
    let outcomes: Vec<SeedOutcome> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = with_seed(base, seed);
            let fingerprint = cfg.fingerprint();
            match run_experiment(&cfg) {
                Ok((log, _)) => SeedOutcome {
                    seed,
                    fingerprint,
                    summary: Some(log.summary),
                    final_v: Some(log.final_v),
                    error: None,
                },
                Err(e) => SeedOutcome {
                    seed,
                    fingerprint,
                    summary: None,
                    final_v: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let ok: Vec<&MechanismSummary> = outcomes.iter().filter_map(|o| o.summary.as_ref()).collect();
    let aggregate = mean_std(&ok.iter().map(|s| s.steady_state_v).collect::<Vec<_>>()).map(
        |steady_state_v| SweepAggregate {
            steady_state_v,
            mean_alignment: mean_std(
                &ok.iter().filter_map(|s| s.mean_alignment).collect::<Vec<_>>(),
            ),
            gcr: mean_std(&ok.iter().map(|s| s.gcr).collect::<Vec<_>>())
                .expect("same count as steady_state_V"),
            gap_decay_rate: mean_std(
                &ok.iter().filter_map(|s| s.gap_decay_rate).collect::<Vec<_>>(),
            ),
            converged: ok.iter().filter(|s| s.convergence_step.is_some()).count(),
            n_runs: ok.len(),
        },
    );

    let n_failures = seeds.len() - ok.len();
    Ok(SweepReport {
        schema_version: SCHEMA_VERSION,
        base_fingerprint: base.fingerprint(),
        per_seed: outcomes,
        n_failures,
        aggregate,
    })
}
