//! Iteration loops: the projected update law, its ablations, and baselines.
//!
//! Every variant performs gradient *ascent* `theta' = theta + eta * d` with a
//! per-variant direction:
//!
//! | variant           | direction                                          |
//! |-------------------|----------------------------------------------------|
//! | `naive`           | `u_ind`                                            |
//! | `team`            | `u_team`                                           |
//! | `soft_penalty`    | `u_ind - rho * h`                                  |
//! | `pcgrad`          | per-agent-block surgery of `u_ind` against `u_team`|
//! | `halypo_static`   | half-space projection, constant step               |
//! | `halypo_no_align` | half-space projection, any schedule                |
//! | `halypo`          | projection plus alignment rectification            |
//!
//! Step sizes come from a constant, an adaptive rule derived from the descent
//! certificate (`eta <= 2 sigma V / (L ||d||^2)` scaled by a safety factor),
//! or a Robbins-Monro decay `eta0 / (k+1)^p`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{default_fd_step, FieldSample, Game, GameError};
use crate::games::markov::{CriticSnapshot, StaleCriticView, TabularMarkovGame};
use crate::games::{BilinearRotationGame, QuadraticGame};
use crate::layout::{AgentLayout, JointParams};
use crate::lyapunov::{
    smoothness_estimate, stability_normal_analytic, stability_normal_fd, SmoothnessEstimate,
};
use crate::metrics::{alignment, block_conflict};
use crate::projection::{halypo_project, ProjectionError, Regime};

/// Lower clamp for adaptive steps (keeps iteration alive near `V = 0`).
pub const ETA_MIN: f64 = 1e-6;
/// Upper clamp for adaptive steps.
pub const ETA_MAX: f64 = 1.0;
/// Default projection damping; keeps `lambda_star` finite when `‖h‖ → 0`
/// with `V > 0`. Set `epsilon: 0.0` explicitly to get the undamped
/// closed-form projection (exact contraction ratios, hard KKT residuals).
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error("game evaluation failed at step {step}: {source}")]
    Game {
        step: usize,
        #[source]
        source: GameError,
    },
    #[error("projection failed at step {step}: {source}")]
    Projection {
        step: usize,
        #[source]
        source: ProjectionError,
    },
}

/// A trajectory error together with everything recorded before it.
#[derive(Debug, Error)]
#[error("trajectory aborted after {} completed steps: {error}", .partial.records.len())]
pub struct RunFailure {
    pub error: OptimError,
    pub partial: TrajectoryLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Each agent ascends its own payoff; ignores the gap entirely.
    Naive,
    /// Ascend the shared objective directly.
    Team,
    /// `u_ind - rho * h`: the gap enters as a fixed-weight penalty.
    SoftPenalty,
    /// Per-agent-block conflict surgery between `u_ind` and `u_team`.
    Pcgrad,
    /// Projection with the step size pinned to a constant.
    HalypoStatic,
    /// Projection without the alignment heuristic: the certified update law.
    HalypoNoAlign,
    /// Projection plus alignment rectification of the projected direction.
    Halypo,
}

impl Variant {
    /// Variants that run the half-space projection.
    #[must_use]
    pub fn is_projected(self) -> bool {
        matches!(self, Variant::HalypoStatic | Variant::HalypoNoAlign | Variant::Halypo)
    }

    /// Variants whose direction involves the stability normal `h`.
    #[must_use]
    pub fn needs_normal(self) -> bool {
        self.is_projected() || self == Variant::SoftPenalty
    }

    #[must_use]
    pub fn name(self) -> &'static str {
        match self {
            Variant::Naive => "naive",
            Variant::Team => "team",
            Variant::SoftPenalty => "soft_penalty",
            Variant::Pcgrad => "pcgrad",
            Variant::HalypoStatic => "halypo_static",
            Variant::HalypoNoAlign => "halypo_no_align",
            Variant::Halypo => "halypo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant { eta: f64 },
    /// Safety fraction `phi` of the certified bound `2 sigma V / (L ||d||^2)`.
    Adaptive { phi: f64 },
    /// `eta0 / (k+1)^p` with `p` in (0.5, 1].
    RobbinsMonro { eta0: f64, p: f64 },
}

/// How the stability normal `h = (J_ind - J_team)^T e` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HMode {
    Analytic,
    Fd,
}

fn default_sigma() -> f64 {
    1.0
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_h_mode() -> HMode {
    HMode::Analytic
}
fn default_snapshot_period() -> usize {
    1
}
fn default_smoothness_samples() -> usize {
    64
}
fn default_eta_min() -> f64 {
    ETA_MIN
}
fn default_eta_max() -> f64 {
    ETA_MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub variant: Variant,
    pub schedule: Schedule,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Projection damping (see [`DEFAULT_EPSILON`]); 0 means undamped.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Soft-penalty weight; ignored by other variants.
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_h_mode")]
    pub h_mode: HMode,
    /// Critic refresh period for Markov games; 1 keeps the critic exact.
    #[serde(default = "default_snapshot_period")]
    pub snapshot_period: usize,
    /// Sample-cloud size for the empirical smoothness estimate used by the
    /// adaptive schedule on games without a closed-form constant.
    #[serde(default = "default_smoothness_samples")]
    pub smoothness_samples: usize,
    /// Lower clamp for adaptive steps; keeps the iteration alive near V = 0.
    #[serde(default = "default_eta_min")]
    pub eta_min: f64,
    /// Upper clamp for adaptive steps.
    #[serde(default = "default_eta_max")]
    pub eta_max: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Halypo,
            schedule: Schedule::Constant { eta: 0.1 },
            sigma: 1.0,
            epsilon: DEFAULT_EPSILON,
            rho: 0.0,
            h_mode: HMode::Analytic,
            snapshot_period: 1,
            smoothness_samples: 64,
            eta_min: ETA_MIN,
            eta_max: ETA_MAX,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |msg: String| Err(OptimError::Config(msg));
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if !self.rho.is_finite() || self.rho < 0.0 {
            return bad(format!("rho must be >= 0, got {}", self.rho));
        }
        if self.snapshot_period == 0 {
            return bad("snapshot_period must be >= 1".into());
        }
        match self.schedule {
            Schedule::Constant { eta } => {
                if !eta.is_finite() || eta <= 0.0 {
                    return bad(format!("constant schedule needs eta > 0, got {eta}"));
                }
            }
            Schedule::Adaptive { phi } => {
                if !phi.is_finite() || phi <= 0.0 || phi > 1.0 {
                    return bad(format!("adaptive safety factor must lie in (0, 1], got {phi}"));
                }
                if !self.variant.is_projected() {
                    return bad(format!(
                        "adaptive schedule is derived from the projected direction's descent \
                         certificate and is not defined for variant '{}'",
                        self.variant.name()
                    ));
                }
                if self.smoothness_samples < 2 {
                    return bad("adaptive schedule needs smoothness_samples >= 2".into());
                }
                if !self.eta_min.is_finite() || self.eta_min <= 0.0 {
                    return bad(format!("eta_min must be positive, got {}", self.eta_min));
                }
                if !self.eta_max.is_finite() || self.eta_max < self.eta_min {
                    return bad(format!(
                        "eta clamps need eta_min <= eta_max, got [{}, {}]",
                        self.eta_min, self.eta_max
                    ));
                }
            }
            Schedule::RobbinsMonro { eta0, p } => {
                if !eta0.is_finite() || eta0 <= 0.0 {
                    return bad(format!("robbins_monro needs eta0 > 0, got {eta0}"));
                }
                // p in (0.5, 1] so the step sums diverge while their squares
                // stay summable.
                if !p.is_finite() || p <= 0.5 || p > 1.0 {
                    return bad(format!("robbins_monro needs p in (0.5, 1], got {p}"));
                }
            }
        }
        if self.variant == Variant::HalypoStatic
            && !matches!(self.schedule, Schedule::Constant { .. })
        {
            return bad("halypo_static pins the step size; use the constant schedule".into());
        }
        Ok(())
    }
}

/// Cross-step scratch owned by the caller of the step functions.
#[derive(Debug, Default, Clone)]
pub struct StepState {
    /// Smoothness constant, filled on first use by the adaptive schedule.
    pub smoothness: Option<SmoothnessEstimate>,
}

/// Per-iteration trace row.
///
/// `v`, `cos_phi`, `conflict`, and `j_team` describe the iterate *before* the
/// step; `eta`, `lambda_star`, `d_norm`, and `regime` describe the step taken
/// from it. Baseline variants run no projection and record `lambda_star = 0`
/// with the `inactive` regime. `cos_phi` is `None` when either field norm is
/// below the alignment threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub eta: f64,
    pub lambda_star: f64,
    pub d_norm: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub cos_phi: Option<f64>,
    pub conflict: bool,
    #[serde(rename = "J_team")]
    pub j_team: f64,
    pub regime: Regime,
}

/// Full record of a run: one `StepRecord` per iteration plus the final
/// iterate evaluated once more.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub records: Vec<StepRecord>,
    pub final_theta: Vec<f64>,
    #[serde(rename = "final_V")]
    pub final_v: f64,
    #[serde(rename = "final_J_team")]
    pub final_j_team: f64,
    /// Present when the adaptive schedule estimated a smoothness constant.
    pub smoothness: Option<SmoothnessEstimate>,
    /// Joint field evaluations made by the loop, including finite-difference
    /// probes for `h` and the final-state evaluation; excludes the one-time
    /// smoothness sample cloud.
    pub field_evals: u64,
}

impl TrajectoryLog {
    /// Gap values `V(theta_0), ..., V(theta_n)` including the final iterate.
    #[must_use]
    pub fn v_series(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.records.iter().map(|r| r.v).collect();
        v.push(self.final_v);
        v
    }
}

/// Certificate-derived step size: `phi * 2 sigma V / (L * ||d||^2)`, clamped
/// to `[ETA_MIN, ETA_MAX]`. A stationary direction returns `ETA_MAX` (the
/// step moves nothing).
#[must_use]
pub fn eta_adaptive(sigma: f64, v: f64, l: f64, d_norm_sq: f64, phi: f64) -> f64 {
    eta_adaptive_clamped(sigma, v, l, d_norm_sq, phi, ETA_MIN, ETA_MAX)
}

/// [`eta_adaptive`] with caller-supplied clamp bounds.
#[must_use]
pub fn eta_adaptive_clamped(
    sigma: f64,
    v: f64,
    l: f64,
    d_norm_sq: f64,
    phi: f64,
    eta_min: f64,
    eta_max: f64,
) -> f64 {
    if d_norm_sq == 0.0 {
        return eta_max;
    }
    (phi * 2.0 * sigma * v / (l * d_norm_sq)).clamp(eta_min, eta_max)
}

/// Robbins-Monro decay `eta0 / (k+1)^p`.
#[must_use]
pub fn eta_schedule_rm(k: usize, eta0: f64, p: f64) -> f64 {
    eta0 / ((k + 1) as f64).powf(p)
}

/// Removes the component of `d` that opposes `u_team`: returns `d` unchanged
/// when `<d, u_team> >= 0` or `u_team = 0`, else the projection of `d` onto
/// the hyperplane orthogonal to `u_team`. Never increases `||d||`.
#[must_use]
pub fn align_rectify(d: &[f64], u_team: &[f64]) -> Vec<f64> {
    assert_eq!(d.len(), u_team.len());
    let ip: f64 = d.iter().zip(u_team).map(|(a, b)| a * b).sum();
    let tt: f64 = u_team.iter().map(|x| x * x).sum();
    if ip >= 0.0 || tt == 0.0 {
        return d.to_vec();
    }
    d.iter().zip(u_team).map(|(a, b)| a - (ip / tt) * b).collect()
}

/// Per-agent-block gradient surgery: blocks of `u_ind` that conflict with the
/// matching `u_team` block lose their projection onto it. Blocks with a zero
/// team norm never conflict (`<u_i, t_i> = 0`) and are left untouched.
#[must_use]
pub fn pcgrad_surgery(layout: &AgentLayout, u_ind: &[f64], u_team: &[f64]) -> Vec<f64> {
    let mut out = u_ind.to_vec();
    for i in 0..layout.n_agents() {
        let range = layout.block(i);
        let ui = &u_ind[range.clone()];
        let ti = &u_team[range.clone()];
        let ip: f64 = ui.iter().zip(ti).map(|(a, b)| a * b).sum();
        if ip < 0.0 {
            let tt: f64 = ti.iter().map(|x| x * x).sum();
            for (o, t) in out[range].iter_mut().zip(ti) {
                *o -= (ip / tt) * t;
            }
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn compute_normal(
    game: &dyn Game,
    theta: &JointParams,
    h_mode: HMode,
    step: usize,
) -> Result<Vec<f64>, OptimError> {
    let res = match h_mode {
        HMode::Analytic => stability_normal_analytic(game, theta),
        HMode::Fd => stability_normal_fd(game, theta, default_fd_step(theta)),
    };
    res.map_err(|source| OptimError::Game { step, source })
}

/// Deterministic local sample cloud for the empirical smoothness estimate.
fn ensure_smoothness(
    game: &dyn Game,
    theta: &JointParams,
    config: &OptimizerConfig,
    state: &mut StepState,
) -> Result<SmoothnessEstimate, OptimError> {
    if let Some(est) = state.smoothness {
        return Ok(est);
    }
    let wrap = |source| OptimError::Game { step: 0, source };
    let mut samples = vec![theta.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(0x534d_4f4f);
    let radius = 0.5 * (1.0 + norm(theta.values()));
    for _ in 1..config.smoothness_samples.max(2) {
        let values: Vec<f64> = theta
            .values()
            .iter()
            .map(|t| t + radius * (rng.gen::<f64>() * 2.0 - 1.0))
            .collect();
        samples.push(
            JointParams::new(values, theta.layout().clone())
                .map_err(|e| wrap(GameError::from(e)))?,
        );
    }
    let est = smoothness_estimate(game, &samples, default_fd_step(theta)).map_err(wrap)?;
    state.smoothness = Some(est);
    Ok(est)
}

#[allow(clippy::too_many_arguments)]
fn choose_eta(
    game: &dyn Game,
    theta: &JointParams,
    config: &OptimizerConfig,
    state: &mut StepState,
    k: usize,
    v: f64,
    d_norm_sq: f64,
) -> Result<f64, OptimError> {
    match config.schedule {
        Schedule::Constant { eta } => Ok(eta),
        Schedule::RobbinsMonro { eta0, p } => Ok(eta_schedule_rm(k, eta0, p)),
        Schedule::Adaptive { phi } => {
            let est = ensure_smoothness(game, theta, config, state)?;
            Ok(eta_adaptive_clamped(
                config.sigma,
                v,
                est.l,
                d_norm_sq,
                phi,
                config.eta_min,
                config.eta_max,
            ))
        }
    }
}

struct Evaluated {
    sample: FieldSample,
    j_team: f64,
}

fn evaluate(
    game: &dyn Game,
    theta: &JointParams,
    step: usize,
) -> Result<Evaluated, OptimError> {
    let wrap = |source| OptimError::Game { step, source };
    let sample = FieldSample::evaluate(game, theta).map_err(wrap)?;
    let j_team = game.team_payoff(theta).map_err(wrap)?;
    Ok(Evaluated { sample, j_team })
}

#[allow(clippy::too_many_arguments)]
fn finish_step(
    game: &dyn Game,
    theta: &JointParams,
    ev: &Evaluated,
    d: &[f64],
    eta: f64,
    k: usize,
    lambda_star: f64,
    regime: Regime,
) -> Result<(JointParams, StepRecord), OptimError> {
    let next = theta
        .stepped(d, eta)
        .map_err(|e| OptimError::Game { step: k, source: GameError::from(e) })?;
    let record = StepRecord {
        k,
        eta,
        lambda_star,
        d_norm: norm(d),
        v: ev.sample.v,
        cos_phi: alignment(&ev.sample.u_ind, &ev.sample.u_team),
        conflict: block_conflict(game.layout(), &ev.sample.u_ind, &ev.sample.u_team),
        j_team: ev.j_team,
        regime,
    };
    Ok((next, record))
}

/// One projected step (variants `halypo`, `halypo_no_align`, `halypo_static`).
pub fn step_halypo(
    game: &dyn Game,
    theta: &JointParams,
    config: &OptimizerConfig,
    k: usize,
    state: &mut StepState,
) -> Result<(JointParams, StepRecord), OptimError> {
    if !config.variant.is_projected() {
        return Err(OptimError::Config(format!(
            "step_halypo called with non-projected variant '{}'",
            config.variant.name()
        )));
    }
    let ev = evaluate(game, theta, k)?;
    let h = compute_normal(game, theta, config.h_mode, k)?;
    let proj = halypo_project(&ev.sample.u_ind, &h, ev.sample.v, config.sigma, config.epsilon)
        .map_err(|source| OptimError::Projection { step: k, source })?;
    let d = if config.variant == Variant::Halypo {
        align_rectify(&proj.d_star, &ev.sample.u_team)
    } else {
        proj.d_star.clone()
    };
    let d_sq = d.iter().map(|x| x * x).sum::<f64>();
    let eta = choose_eta(game, theta, config, state, k, ev.sample.v, d_sq)?;
    finish_step(game, theta, &ev, &d, eta, k, proj.lambda_star, proj.regime)
}

/// One baseline step (variants `naive`, `team`, `soft_penalty`, `pcgrad`).
pub fn step_baseline(
    game: &dyn Game,
    theta: &JointParams,
    config: &OptimizerConfig,
    k: usize,
) -> Result<(JointParams, StepRecord), OptimError> {
    let ev = evaluate(game, theta, k)?;
    let d = match config.variant {
        Variant::Naive => ev.sample.u_ind.clone(),
        Variant::Team => ev.sample.u_team.clone(),
        Variant::SoftPenalty => {
            let h = compute_normal(game, theta, config.h_mode, k)?;
            ev.sample
                .u_ind
                .iter()
                .zip(&h)
                .map(|(u, hh)| u - config.rho * hh)
                .collect()
        }
        Variant::Pcgrad => pcgrad_surgery(game.layout(), &ev.sample.u_ind, &ev.sample.u_team),
        other => {
            return Err(OptimError::Config(format!(
                "step_baseline called with projected variant '{}'",
                other.name()
            )))
        }
    };
    let eta = match config.schedule {
        Schedule::Constant { eta } => eta,
        Schedule::RobbinsMonro { eta0, p } => eta_schedule_rm(k, eta0, p),
        Schedule::Adaptive { .. } => {
            return Err(OptimError::Config(
                "adaptive schedule is not defined for baseline variants".into(),
            ))
        }
    };
    finish_step(game, theta, &ev, &d, eta, k, 0.0, Regime::Inactive)
}

/// A game the trajectory runner knows how to drive.
#[derive(Debug, Clone)]
pub enum RunGame {
    Quadratic(QuadraticGame),
    Bilinear(BilinearRotationGame),
    /// Driven through a critic snapshot refreshed every `snapshot_period`
    /// steps; period 1 reproduces the exact game bit-for-bit.
    Markov(TabularMarkovGame),
}

impl RunGame {
    #[must_use]
    pub fn as_game(&self) -> &dyn Game {
        match self {
            RunGame::Quadratic(g) => g,
            RunGame::Bilinear(g) => g,
            RunGame::Markov(g) => g,
        }
    }
}

fn run_step(
    game: &dyn Game,
    theta: &JointParams,
    config: &OptimizerConfig,
    k: usize,
    state: &mut StepState,
) -> Result<(JointParams, StepRecord), OptimError> {
    if config.variant.is_projected() {
        step_halypo(game, theta, config, k, state)
    } else {
        step_baseline(game, theta, config, k)
    }
}

/// Runs `n_steps` configured steps from `theta0`, recording each iteration.
///
/// Deterministic given `(game, theta0, config)`. Markov games refresh the
/// critic snapshot at the top of every step with `k % snapshot_period == 0`
/// and evaluate all fields through the resulting stale view. A failing step
/// aborts and returns the partial log inside the error.
pub fn run_trajectory(
    game: &RunGame,
    theta0: &[f64],
    config: &OptimizerConfig,
    n_steps: usize,
) -> Result<TrajectoryLog, Box<RunFailure>> {
    let fail_empty = |error: OptimError| {
        Box::new(RunFailure {
            error,
            partial: TrajectoryLog {
                records: Vec::new(),
                final_theta: theta0.to_vec(),
                final_v: f64::NAN,
                final_j_team: f64::NAN,
                smoothness: None,
                field_evals: 0,
            },
        })
    };
    if n_steps == 0 {
        return Err(fail_empty(OptimError::Config("n_steps must be >= 1".into())));
    }
    if let Err(e) = config.validate() {
        return Err(fail_empty(e));
    }
    let base = game.as_game();
    if config.variant.needs_normal()
        && config.h_mode == HMode::Analytic
        && !base.has_analytic_jacobians()
    {
        return Err(fail_empty(OptimError::Config(
            "h_mode 'analytic' needs analytic field jacobians; use h_mode 'fd' for this game"
                .into(),
        )));
    }
    let mut theta = match JointParams::new(theta0.to_vec(), base.layout().clone()) {
        Ok(t) => t,
        Err(e) => {
            return Err(fail_empty(OptimError::Game { step: 0, source: GameError::from(e) }))
        }
    };

    let dim = theta.dim() as u64;
    let evals_per_step = 1
        + if config.variant.needs_normal() && config.h_mode == HMode::Fd { 2 * dim } else { 0 };
    let mut state = StepState::default();
    let mut records: Vec<StepRecord> = Vec::with_capacity(n_steps);
    let mut field_evals: u64 = 0;
    let mut snapshot: Option<CriticSnapshot> = None;

    let fail_partial = |error: OptimError,
                        records: Vec<StepRecord>,
                        theta: &JointParams,
                        state: &StepState,
                        field_evals: u64| {
        Box::new(RunFailure {
            error,
            partial: TrajectoryLog {
                records,
                final_theta: theta.values().to_vec(),
                final_v: f64::NAN,
                final_j_team: f64::NAN,
                smoothness: state.smoothness,
                field_evals,
            },
        })
    };

    for k in 0..n_steps {
        let stepped = match game {
            RunGame::Markov(mg) => {
                if k % config.snapshot_period == 0 {
                    match CriticSnapshot::refresh(mg, &theta, k) {
                        Ok(s) => snapshot = Some(s),
                        Err(source) => {
                            return Err(fail_partial(
                                OptimError::Game { step: k, source },
                                records,
                                &theta,
                                &state,
                                field_evals,
                            ))
                        }
                    }
                }
                let view = StaleCriticView {
                    game: mg,
                    snapshot: snapshot.as_ref().expect("snapshot set at k = 0"),
                };
                run_step(&view, &theta, config, k, &mut state)
            }
            _ => run_step(base, &theta, config, k, &mut state),
        };
        match stepped {
            Ok((next, record)) => {
                records.push(record);
                theta = next;
                field_evals += evals_per_step;
            }
            Err(error) => return Err(fail_partial(error, records, &theta, &state, field_evals)),
        }
    }

    // Final-state evaluation through the same lens the last step used.
    let final_ev = match game {
        RunGame::Markov(mg) => {
            let view = StaleCriticView {
                game: mg,
                snapshot: snapshot.as_ref().expect("n_steps >= 1"),
            };
            evaluate(&view, &theta, n_steps)
        }
        _ => evaluate(base, &theta, n_steps),
    };
    field_evals += 1;
    match final_ev {
        Ok(ev) => Ok(TrajectoryLog {
            records,
            final_theta: theta.values().to_vec(),
            final_v: ev.sample.v,
            final_j_team: ev.j_team,
            smoothness: state.smoothness,
            field_evals,
        }),
        Err(error) => Err(fail_partial(error, records, &theta, &state, field_evals)),
    }
}
