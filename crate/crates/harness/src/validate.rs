//! Runnable validation suites: each library property becomes a named check
//! that measures its own tolerance and reports pass/fail. `all` runs every
//! check; the CLI exits nonzero when any fails.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use halypo_core::game::{default_fd_step, fd_gradient};
use halypo_core::games::markov::{single_state_bandit, two_state};
use halypo_core::games::{q_example, QuadraticGame};
use halypo_core::lyapunov::{stability_normal_analytic, stability_normal_fd};
use halypo_core::{
    alignment, conflict_rate, decay_rate, descent_certificate_check, halfspace_oracle,
    halypo_project, kkt_residuals, run_trajectory, summarize, Game, GameError, HMode, JointParams,
    OptimizerConfig, Regime, RunGame, Schedule, StepRecord, SummaryThresholds, TrajectoryLog,
    Variant,
};

pub const SUITE_NAMES: [&str; 6] =
    ["projection", "gradients", "descent", "convergence", "metrics", "all"];

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("unknown suite {name:?}; known suites: projection, gradients, descent, convergence, metrics, all")]
    UnknownSuite { name: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    /// Measured quantity behind the verdict, e.g. the worst observed error.
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub suite: String,
    pub n_passed: usize,
    pub n_failed: usize,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    #[must_use]
    pub fn all_passed(&self) -> bool {
        self.n_failed == 0
    }
}

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5641_4c00 + tag)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sub_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn params(game: &dyn Game, values: Vec<f64>) -> JointParams {
    JointParams::new(values, game.layout().clone()).expect("dimension by construction")
}

/// Finite-difference oracle for the independent field: each agent's own-block
/// gradient of its own payoff, others frozen.
pub fn fd_independent_field(game: &dyn Game, theta: &JointParams) -> Result<Vec<f64>, GameError> {
    let layout = game.layout().clone();
    let step = default_fd_step(theta);
    let mut out = vec![0.0; layout.dim()];
    for agent in 0..layout.n_agents() {
        let grad = fd_gradient(|t| game.agent_payoff(agent, t), theta, step)?;
        for j in layout.block(agent) {
            out[j] = grad[j];
        }
    }
    Ok(out)
}

/// Deterministic random quadratic game with a conditioning guarantee: the gap
/// matrix `M - Q` is built with singular values in [0.5, 3], so the potential
/// has a unique zero and the projection normal never degenerates. The gap is
/// constructed directly (random orthogonal basis, prescribed signed spectrum)
/// rather than rejection-sampled; at dimension ~15 a random gap almost never
/// clears a 0.2 singular-value floor, so rejection stalls for seconds.
pub fn random_quadratic(rng: &mut ChaCha8Rng, max_dim: usize) -> QuadraticGame {
    assert!(max_dim >= 2, "need at least two scalar agents");
    let n_agents = if max_dim >= 3 && rng.gen_bool(0.5) { 3 } else { 2 };
    let max_block = (max_dim / n_agents).max(1);
    let block_dims: Vec<usize> =
        (0..n_agents).map(|_| rng.gen_range(1..=max_block)).collect();
    let d: usize = block_dims.iter().sum();

    // Team payoff: negative definite with eigenvalues in roughly [-3, -0.5].
    let a = DMatrix::from_fn(d, d, |_, _| {
        let x: f64 = StandardNormal.sample(rng);
        x
    });
    let q = -(&a * a.transpose()) / (d as f64) - 0.5 * DMatrix::<f64>::identity(d, d);
    let b = DVector::from_fn(d, |_, _| {
        let x: f64 = StandardNormal.sample(rng);
        0.5 * x
    });

    // Symmetric gap with eigenvalue magnitudes in [0.5, 3]; the singular
    // values of a symmetric matrix are the magnitudes of its eigenvalues.
    let raw = DMatrix::from_fn(d, d, |_, _| {
        let x: f64 = StandardNormal.sample(rng);
        x
    });
    let basis = raw.qr().q();
    let spectrum = DVector::from_fn(d, |_, _| {
        let mag = 0.5 + 2.5 * rng.gen::<f64>();
        if rng.gen_bool(0.5) {
            mag
        } else {
            -mag
        }
    });
    let m = &q + &basis * DMatrix::from_diagonal(&spectrum) * basis.transpose();

    // Each agent's payoff is the symmetric completion of its rows of M:
    // the independent field reads only an agent's own block rows, and a
    // symmetric gap makes M's diagonal blocks symmetric, so the completion
    // is consistent. Entries untouched by the block stay at Q.
    let mut offset = 0;
    let mut q_i = Vec::with_capacity(n_agents);
    for &width in &block_dims {
        let mut qi = q.clone();
        for r in offset..offset + width {
            for c in 0..d {
                qi[(r, c)] = m[(r, c)];
                qi[(c, r)] = m[(r, c)];
            }
        }
        q_i.push(qi);
        offset += width;
    }
    let b_i: Vec<DVector<f64>> = (0..n_agents)
        .map(|_| {
            DVector::from_fn(d, |_, _| {
                let x: f64 = StandardNormal.sample(rng);
                0.5 * x
            })
        })
        .collect();
    QuadraticGame::new(q_i, b_i, q, b, block_dims)
        .expect("generated matrices are symmetric and sized")
}

fn check(
    suite: &'static str,
    name: &'static str,
    body: impl FnOnce() -> (bool, String),
) -> CheckResult {
    let (passed, detail) = body();
    CheckResult { suite, name, passed, detail }
}

// --- projection suite -------------------------------------------------------

struct ProjectionInstance {
    u: Vec<f64>,
    h: Vec<f64>,
    v: f64,
    sigma: f64,
}

fn projection_instance(rng: &mut ChaCha8Rng, dim: usize) -> ProjectionInstance {
    let u = gaussian(rng, dim);
    let mut h = gaussian(rng, dim);
    while norm(&h) < 1e-6 {
        h = gaussian(rng, dim);
    }
    let v = rng.gen::<f64>() * 10.0;
    let sigma = 0.1 + rng.gen::<f64>() * 9.9;
    ProjectionInstance { u, h, v, sigma }
}

fn oracle_equivalence_1000() -> (bool, String) {
    let mut rng = rng(1);
    let mut worst = 0.0_f64;
    for i in 0..1000 {
        let dim = 2 + (i % 63);
        let inst = projection_instance(&mut rng, dim);
        let proj = match halypo_project(&inst.u, &inst.h, inst.v, inst.sigma, 0.0) {
            Ok(p) => p,
            Err(e) => return (false, format!("projection failed on instance {i}: {e}")),
        };
        let oracle = match halfspace_oracle(&inst.u, &inst.h, -inst.sigma * inst.v) {
            Ok(o) => o,
            Err(e) => return (false, format!("oracle failed on instance {i}: {e}")),
        };
        worst = worst.max(sub_norm(&proj.d_star, &oracle) / (1.0 + norm(&oracle)));
    }
    (worst <= 1e-9, format!("worst relative gap to the oracle {worst:.3e} over 1000 instances"))
}

fn kkt_residuals_bounds() -> (bool, String) {
    let mut rng = rng(2);
    let mut worst = 0.0_f64;
    for i in 0..200 {
        let inst = projection_instance(&mut rng, 2 + (i % 15));
        let epsilon = [0.0, 1e-3, 0.5][i % 3];
        let proj = match halypo_project(&inst.u, &inst.h, inst.v, inst.sigma, epsilon) {
            Ok(p) => p,
            Err(e) => return (false, format!("projection failed on instance {i}: {e}")),
        };
        let res = kkt_residuals(&proj, &inst.u, &inst.h, inst.v, inst.sigma, epsilon);
        let scale = 1.0 + norm(&inst.u) + inst.sigma * inst.v;
        let (feas, slack) = if epsilon == 0.0 || proj.regime == Regime::Inactive {
            // Inactive instances keep the raw residual <= 0 with a zero
            // multiplier, so only positive excess counts as a violation.
            (res.feasibility.max(0.0), res.slackness)
        } else {
            // Active damped problems satisfy the shifted identity
            // <h,d*> + sigma V = eps lambda* instead of exact feasibility.
            (
                (res.feasibility - epsilon * proj.lambda_star).abs(),
                (res.slackness - epsilon * proj.lambda_star * proj.lambda_star).abs(),
            )
        };
        worst = worst.max((res.stationarity / scale).max(feas / scale).max(slack / scale));
    }
    (worst <= 1e-10, format!("worst scaled KKT residual {worst:.3e} over 200 instances"))
}

fn dissipativity_raw() -> (bool, String) {
    let mut rng = rng(3);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..200 {
        let inst = projection_instance(&mut rng, 2 + (i % 15));
        let proj = match halypo_project(&inst.u, &inst.h, inst.v, inst.sigma, 0.0) {
            Ok(p) => p,
            Err(e) => return (false, format!("projection failed on instance {i}: {e}")),
        };
        let scale = 1.0 + norm(&inst.u) + inst.sigma * inst.v;
        worst = worst.max(proj.constraint_residual / scale);
    }
    (
        worst <= 1e-12,
        format!("worst scaled <h,d*> + sigma V = {worst:.3e} over 200 instances (<= 0 required)"),
    )
}

fn damped_identity_epsilon() -> (bool, String) {
    let mut rng = rng(4);
    let mut worst = 0.0_f64;
    let mut n_active = 0_usize;
    for i in 0..200 {
        let inst = projection_instance(&mut rng, 2 + (i % 15));
        let epsilon = [1e-6, 0.1, 1.0, 10.0][i % 4];
        let proj = match halypo_project(&inst.u, &inst.h, inst.v, inst.sigma, epsilon) {
            Ok(p) => p,
            Err(e) => return (false, format!("projection failed on instance {i}: {e}")),
        };
        let scale = 1.0 + norm(&inst.u) + inst.sigma * inst.v + epsilon * proj.lambda_star;
        let gap = match proj.regime {
            Regime::Active => {
                n_active += 1;
                (proj.constraint_residual - epsilon * proj.lambda_star).abs()
            }
            // Off the constraint the multiplier vanishes and the identity
            // reduces to plain feasibility of the raw residual.
            Regime::Inactive => proj.lambda_star.abs().max(proj.constraint_residual.max(0.0)),
        };
        worst = worst.max(gap / scale);
    }
    if n_active < 50 {
        return (false, format!("only {n_active}/200 instances hit the active regime"));
    }
    (
        worst <= 1e-12,
        format!("worst scaled damped-identity error {worst:.3e} ({n_active}/200 active)"),
    )
}

fn idempotence_reprojection() -> (bool, String) {
    let mut rng = rng(5);
    let mut worst = 0.0_f64;
    for i in 0..200 {
        let inst = projection_instance(&mut rng, 2 + (i % 15));
        let first = match halypo_project(&inst.u, &inst.h, inst.v, inst.sigma, 0.0) {
            Ok(p) => p,
            Err(e) => return (false, format!("projection failed on instance {i}: {e}")),
        };
        let second = match halypo_project(&first.d_star, &inst.h, inst.v, inst.sigma, 0.0) {
            Ok(p) => p,
            Err(e) => return (false, format!("re-projection failed on instance {i}: {e}")),
        };
        worst =
            worst.max(sub_norm(&second.d_star, &first.d_star) / (1.0 + norm(&first.d_star)));
    }
    (worst <= 1e-12, format!("worst relative drift under re-projection {worst:.3e}"))
}

// --- gradients suite --------------------------------------------------------

fn bundled_games() -> Vec<(&'static str, RunGame)> {
    vec![
        ("bilinear", RunGame::Bilinear(halypo_core::games::BilinearRotationGame::new())),
        ("q_example", RunGame::Quadratic(q_example())),
        ("shared_payoff_pair", RunGame::Quadratic(QuadraticGame::shared_payoff_pair())),
        ("two_state", RunGame::Markov(two_state())),
        ("single_state_bandit", RunGame::Markov(single_state_bandit())),
    ]
}

fn fields_vs_fd(games: &[(&'static str, RunGame)], n_points: usize, seed: u64) -> (bool, String) {
    let mut rng = rng(seed);
    let mut worst = 0.0_f64;
    let mut worst_at = "";
    for (name, game) in games {
        let g = game.as_game();
        let dim = g.layout().dim();
        for _ in 0..n_points {
            let theta = params(g, gaussian(&mut rng, dim));
            let step = default_fd_step(&theta);
            let checks: [(&str, Result<Vec<f64>, GameError>, Result<Vec<f64>, GameError>); 2] = [
                (
                    "u_team",
                    g.team_field(&theta),
                    fd_gradient(|t| g.team_payoff(t), &theta, step),
                ),
                ("u_ind", g.independent_field(&theta), fd_independent_field(g, &theta)),
            ];
            for (what, analytic, fd) in checks {
                let (analytic, fd) = match (analytic, fd) {
                    (Ok(a), Ok(f)) => (a, f),
                    (a, f) => {
                        return (
                            false,
                            format!("{name}/{what} evaluation failed: {:?} {:?}", a.err(), f.err()),
                        )
                    }
                };
                let rel = sub_norm(&analytic, &fd) / (1.0 + norm(&analytic));
                if rel > worst {
                    worst = rel;
                    worst_at = name;
                }
            }
        }
    }
    (worst <= 1e-5, format!("worst relative field error {worst:.3e} (at {worst_at})"))
}

fn bilinear_fields_fd() -> (bool, String) {
    let games: Vec<_> =
        bundled_games().into_iter().filter(|(n, _)| *n == "bilinear").collect();
    fields_vs_fd(&games, 100, 10)
}

fn quadratic_fields_fd() -> (bool, String) {
    let games: Vec<_> = bundled_games()
        .into_iter()
        .filter(|(n, _)| *n == "q_example" || *n == "shared_payoff_pair")
        .collect();
    fields_vs_fd(&games, 100, 11)
}

fn markov_policy_gradient_fd() -> (bool, String) {
    let mut rng = rng(12);
    let mut worst = 0.0_f64;
    for game in [two_state(), single_state_bandit()] {
        let dim = game.layout().dim();
        for _ in 0..25 {
            let theta = params(&game, gaussian(&mut rng, dim));
            let step = default_fd_step(&theta);
            let analytic =
                match halypo_core::games::exact_policy_gradient(&game, &theta) {
                    Ok(a) => a,
                    Err(e) => return (false, format!("policy gradient failed: {e}")),
                };
            let fd = match fd_gradient(|t| game.team_payoff(t), &theta, step) {
                Ok(f) => f,
                Err(e) => return (false, format!("fd gradient failed: {e}")),
            };
            worst = worst.max(sub_norm(&analytic, &fd) / (1.0 + norm(&analytic)));
        }
    }
    (worst <= 1e-5, format!("worst relative policy-gradient error {worst:.3e}"))
}

fn stability_normal_fd_match() -> (bool, String) {
    let mut rng = rng(13);
    let mut worst = 0.0_f64;
    for (name, game) in bundled_games() {
        let g = game.as_game();
        if !g.has_analytic_jacobians() {
            continue;
        }
        let dim = g.layout().dim();
        for _ in 0..20 {
            let theta = params(g, gaussian(&mut rng, dim));
            let analytic = match stability_normal_analytic(g, &theta) {
                Ok(a) => a,
                Err(e) => return (false, format!("{name}: analytic normal failed: {e}")),
            };
            let fd = match stability_normal_fd(g, &theta, default_fd_step(&theta)) {
                Ok(f) => f,
                Err(e) => return (false, format!("{name}: fd normal failed: {e}")),
            };
            worst = worst.max(sub_norm(&analytic, &fd) / (1.0 + norm(&analytic)));
        }
    }
    (worst <= 1e-5, format!("worst relative stability-normal error {worst:.3e}"))
}

// --- descent suite ----------------------------------------------------------

fn projected_config(schedule: Schedule, sigma: f64) -> OptimizerConfig {
    OptimizerConfig {
        variant: Variant::HalypoNoAlign,
        schedule,
        sigma,
        // Undamped: the descent checks compare against exact ratios and
        // equality-form certificates, both of which assume epsilon = 0.
        epsilon: 0.0,
        ..OptimizerConfig::default()
    }
}

fn bilinear_exact_ratio() -> (bool, String) {
    let game = RunGame::Bilinear(halypo_core::games::BilinearRotationGame::new());
    let config = projected_config(Schedule::Constant { eta: 0.1 }, 1.0);
    let log = match run_trajectory(&game, &[1.0, 0.0], &config, 200) {
        Ok(l) => l,
        Err(e) => return (false, format!("run failed: {e}")),
    };
    let v = log.v_series();
    let mut worst = 0.0_f64;
    for pair in v.windows(2) {
        worst = worst.max((pair[1] / pair[0] - 0.9125).abs() / 0.9125);
    }
    (worst <= 1e-9, format!("worst relative deviation of V ratio from 0.9125: {worst:.3e}"))
}

fn bilinear_theorem1_equality() -> (bool, String) {
    let game = RunGame::Bilinear(halypo_core::games::BilinearRotationGame::new());
    let config = projected_config(Schedule::Constant { eta: 0.1 }, 1.0);
    let log = match run_trajectory(&game, &[1.0, 0.0], &config, 1) {
        Ok(l) => l,
        Err(e) => return (false, format!("run failed: {e}")),
    };
    let r = &log.records[0];
    let delta = log.final_v - r.v;
    let (holds, slack) = descent_certificate_check(
        r.v,
        log.final_v,
        r.eta,
        config.sigma,
        2.0,
        r.d_norm * r.d_norm,
    );
    let ok = holds && (delta + 0.0875).abs() <= 1e-9 && slack.abs() <= 1e-9;
    (ok, format!("V_1 - V_0 = {delta:.12}, certificate slack {slack:.3e} (equality expected)"))
}

fn adaptive_quadratic_runs() -> Result<Vec<(QuadraticGame, TrajectoryLog)>, String> {
    let mut rng = rng(20);
    let mut out = Vec::new();
    for _ in 0..5 {
        let game = random_quadratic(&mut rng, 8);
        let dim = game.layout().dim();
        let theta0 = gaussian(&mut rng, dim);
        let config = projected_config(Schedule::Adaptive { phi: 0.5 }, 1.0);
        let log = run_trajectory(&RunGame::Quadratic(game.clone()), &theta0, &config, 150)
            .map_err(|e| format!("adaptive run failed: {e}"))?;
        out.push((game, log));
    }
    Ok(out)
}

fn quadratic_adaptive_certificate() -> (bool, String) {
    let runs = match adaptive_quadratic_runs() {
        Ok(r) => r,
        Err(e) => return (false, e),
    };
    let mut min_slack = f64::INFINITY;
    for (game, log) in &runs {
        let l = game.exact_smoothness().expect("quadratic games carry an exact constant");
        let v = log.v_series();
        for (k, r) in log.records.iter().enumerate() {
            let (_, slack) =
                descent_certificate_check(r.v, v[k + 1], r.eta, 1.0, l, r.d_norm * r.d_norm);
            min_slack = min_slack.min(slack);
        }
    }
    (
        min_slack >= -1e-9,
        format!("minimum certificate slack {min_slack:.3e} over 5 games x 150 adaptive steps"),
    )
}

fn quadratic_adaptive_monotone() -> (bool, String) {
    let runs = match adaptive_quadratic_runs() {
        Ok(r) => r,
        Err(e) => return (false, e),
    };
    let mut worst = f64::NEG_INFINITY;
    for (_, log) in &runs {
        for pair in log.v_series().windows(2) {
            worst = worst.max((pair[1] - pair[0]) / (1.0 + pair[0]));
        }
    }
    (
        worst <= 1e-15,
        format!("largest relative V increase {worst:.3e} (non-increasing required)"),
    )
}

// --- convergence suite ------------------------------------------------------

const RM_SIGMA: f64 = 3.0;
const RM_TARGET: f64 = 1e-4;

/// First step index after which every later V stays below the target.
fn sustained_crossing(v: &[f64], target: f64) -> Option<usize> {
    let last_above = v.iter().rposition(|x| *x >= target);
    match last_above {
        None => Some(0),
        Some(i) if i + 1 < v.len() => Some(i + 1),
        Some(_) => None,
    }
}

fn rm_config(snapshot_period: usize, h_mode: HMode) -> OptimizerConfig {
    OptimizerConfig {
        variant: Variant::HalypoNoAlign,
        schedule: Schedule::RobbinsMonro { eta0: 0.5, p: 1.0 },
        sigma: RM_SIGMA,
        epsilon: 0.0,
        snapshot_period,
        h_mode,
        ..OptimizerConfig::default()
    }
}

fn rm_run(
    game: RunGame,
    theta0: &[f64],
    n_steps: usize,
    k: usize,
    h_mode: HMode,
) -> Result<TrajectoryLog, String> {
    run_trajectory(&game, theta0, &rm_config(k, h_mode), n_steps)
        .map_err(|e| format!("decaying-step run failed: {e}"))
}

fn rm_check(game: RunGame, theta0: &[f64], n_steps: usize, k: usize, h_mode: HMode) -> (bool, String) {
    let log = match rm_run(game, theta0, n_steps, k, h_mode) {
        Ok(l) => l,
        Err(e) => return (false, e),
    };
    let v = log.v_series();
    match sustained_crossing(&v, RM_TARGET) {
        Some(step) => (
            true,
            format!("V stays below {RM_TARGET:.0e} from step {step} on; final V = {:.3e}", log.final_v),
        ),
        None => (false, format!("V never settled below {RM_TARGET:.0e}; final V = {:.3e}", log.final_v)),
    }
}

fn bilinear_rm() -> (bool, String) {
    rm_check(
        RunGame::Bilinear(halypo_core::games::BilinearRotationGame::new()),
        &[1.0, 0.0],
        20_000,
        1,
        HMode::Analytic,
    )
}

fn q_example_rm() -> (bool, String) {
    rm_check(RunGame::Quadratic(q_example()), &[1.0, 0.0], 20_000, 1, HMode::Analytic)
}

pub const MARKOV_THETA0: [f64; 8] = [0.1, -0.2, 0.05, 0.3, -0.1, 0.2, 0.0, -0.05];

fn markov_rm() -> (bool, String) {
    // Tabular policies expose no analytic field Jacobians, so the stability
    // normal comes from finite differences.
    rm_check(RunGame::Markov(two_state()), &MARKOV_THETA0, 30_000, 10, HMode::Fd)
}

fn rm_partial_sums_bounded() -> (bool, String) {
    let game = RunGame::Bilinear(halypo_core::games::BilinearRotationGame::new());
    let log = match rm_run(game, &[1.0, 0.0], 20_000, 1, HMode::Analytic) {
        Ok(l) => l,
        Err(e) => return (false, e),
    };
    let v0 = log.records[0].v;
    let g_hat = log.records.iter().fold(0.0_f64, |m, r| m.max(r.d_norm));
    let (l, eta0) = (2.0, 0.5);
    let bound = v0 + (l * g_hat * g_hat / 2.0) * (std::f64::consts::PI.powi(2) / 6.0) * eta0 * eta0;
    let total: f64 = log.records.iter().map(|r| r.eta * r.v).sum();
    // Terms are nonnegative, so partial sums are monotone by construction;
    // assert it anyway against sign bugs.
    let monotone = log.records.iter().all(|r| r.eta * r.v >= 0.0);
    (
        monotone && total < bound,
        format!("sum of eta_k V_k = {total:.6} vs bound {bound:.6} (sup ||d*|| = {g_hat:.4})"),
    )
}

// --- metrics suite ----------------------------------------------------------

fn alignment_scale_invariance() -> (bool, String) {
    let mut rng = rng(30);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let u = gaussian(&mut rng, 6);
        let t = gaussian(&mut rng, 6);
        let base = alignment(&u, &t);
        let scaled = alignment(
            &u.iter().map(|x| 3.0 * x).collect::<Vec<_>>(),
            &t.iter().map(|x| 0.5 * x).collect::<Vec<_>>(),
        );
        match (base, scaled) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            _ => return (false, "alignment undefined on generic vectors".into()),
        }
    }
    let zero_is_none = alignment(&[0.0; 3], &[1.0, 0.0, 0.0]).is_none();
    (
        worst <= 1e-12 && zero_is_none,
        format!("worst scale-invariance deviation {worst:.3e}; zero field maps to undefined"),
    )
}

fn synthetic_log(flags: &[bool]) -> TrajectoryLog {
    let records: Vec<StepRecord> = flags
        .iter()
        .enumerate()
        .map(|(k, &conflict)| StepRecord {
            k,
            eta: 0.1,
            lambda_star: 0.0,
            d_norm: 1.0,
            v: 1.0,
            cos_phi: Some(0.5),
            conflict,
            j_team: 0.0,
            regime: Regime::Inactive,
        })
        .collect();
    TrajectoryLog {
        records,
        final_theta: vec![0.0],
        final_v: 1.0,
        final_j_team: 0.0,
        smoothness: None,
        field_evals: 0,
    }
}

fn conflict_rate_range() -> (bool, String) {
    let log = synthetic_log(&[true, false, true, true]);
    let full = conflict_rate(&log, 4);
    let tail = conflict_rate(&log, 2);
    let ok = matches!(full, Ok(r) if r == 0.75)
        && matches!(tail, Ok(r) if r == 1.0)
        && conflict_rate(&log, 0).is_err()
        && conflict_rate(&log, 5).is_err();
    (ok, format!("window rates {full:?} / {tail:?}; degenerate windows rejected"))
}

fn decay_log_additivity() -> (bool, String) {
    let n = 40;
    let a: Vec<f64> = (0..n).map(|k| 2.0 * 0.9_f64.powi(k)).collect();
    let b: Vec<f64> = (0..n).map(|k| 5.0 * 0.8_f64.powi(k)).collect();
    let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let (ra, rb, rp) = match (
        decay_rate(&a, 20),
        decay_rate(&b, 20),
        decay_rate(&prod, 20),
    ) {
        (Ok(x), Ok(y), Ok(z)) => (x.rate, y.rate, z.rate),
        other => return (false, format!("decay estimation failed: {other:?}")),
    };
    let gap = (rp - (ra + rb)).abs();
    let scaled = decay_rate(&a.iter().map(|x| 7.0 * x).collect::<Vec<_>>(), 20)
        .map(|d| (d.rate - ra).abs())
        .unwrap_or(f64::INFINITY);
    (
        gap <= 1e-12 && scaled <= 1e-12,
        format!("log-additivity gap {gap:.3e}, scale dependence {scaled:.3e}"),
    )
}

fn summary_convergence_step_bilinear() -> (bool, String) {
    let game = RunGame::Bilinear(halypo_core::games::BilinearRotationGame::new());
    let config = projected_config(Schedule::Constant { eta: 0.1 }, 1.0);
    let log = match run_trajectory(&game, &[1.0, 0.0], &config, 400) {
        Ok(l) => l,
        Err(e) => return (false, format!("run failed: {e}")),
    };
    let summary = summarize(&log, &SummaryThresholds::default());
    let rate_ok = summary
        .gap_decay_rate
        .map(|r| (r - 0.9125_f64.ln()).abs() <= 1e-9)
        .unwrap_or(false);
    let ok = summary.convergence_step == Some(151) && rate_ok && summary.steady_state_v < 1e-6;
    (
        ok,
        format!(
            "convergence_step {:?} (151 expected), decay rate {:?} vs ln 0.9125 = {:.6}",
            summary.convergence_step,
            summary.gap_decay_rate,
            0.9125_f64.ln()
        ),
    )
}

// --- suite plumbing ---------------------------------------------------------

type CheckFn = fn() -> (bool, String);

fn suite_checks(suite: &str) -> Option<Vec<(&'static str, &'static str, CheckFn)>> {
    let projection: Vec<(&'static str, &'static str, CheckFn)> = vec![
        ("projection", "oracle_equivalence_1000", oracle_equivalence_1000),
        ("projection", "kkt_residuals_bounds", kkt_residuals_bounds),
        ("projection", "dissipativity_raw", dissipativity_raw),
        ("projection", "damped_identity_epsilon", damped_identity_epsilon),
        ("projection", "idempotence_reprojection", idempotence_reprojection),
    ];
    let gradients: Vec<(&'static str, &'static str, CheckFn)> = vec![
        ("gradients", "bilinear_fields_fd", bilinear_fields_fd),
        ("gradients", "quadratic_fields_fd", quadratic_fields_fd),
        ("gradients", "markov_policy_gradient_fd", markov_policy_gradient_fd),
        ("gradients", "stability_normal_fd_match", stability_normal_fd_match),
    ];
    let descent: Vec<(&'static str, &'static str, CheckFn)> = vec![
        ("descent", "bilinear_exact_ratio", bilinear_exact_ratio),
        ("descent", "bilinear_theorem1_equality", bilinear_theorem1_equality),
        ("descent", "quadratic_adaptive_certificate", quadratic_adaptive_certificate),
        ("descent", "quadratic_adaptive_monotone", quadratic_adaptive_monotone),
    ];
    let convergence: Vec<(&'static str, &'static str, CheckFn)> = vec![
        ("convergence", "bilinear_rm", bilinear_rm),
        ("convergence", "q_example_rm", q_example_rm),
        ("convergence", "markov_rm", markov_rm),
        ("convergence", "rm_partial_sums_bounded", rm_partial_sums_bounded),
    ];
    let metrics: Vec<(&'static str, &'static str, CheckFn)> = vec![
        ("metrics", "alignment_scale_invariance", alignment_scale_invariance),
        ("metrics", "conflict_rate_range", conflict_rate_range),
        ("metrics", "decay_log_additivity", decay_log_additivity),
        ("metrics", "summary_convergence_step_bilinear", summary_convergence_step_bilinear),
    ];
    match suite {
        "projection" => Some(projection),
        "gradients" => Some(gradients),
        "descent" => Some(descent),
        "convergence" => Some(convergence),
        "metrics" => Some(metrics),
        "all" => Some(
            [projection, gradients, descent, convergence, metrics].into_iter().flatten().collect(),
        ),
        _ => None,
    }
}

pub fn run_suite(name: &str) -> Result<ValidationReport, ValidateError> {
    let checks = suite_checks(name).ok_or_else(|| ValidateError::UnknownSuite {
        name: name.to_string(),
    })?;
    let results: Vec<CheckResult> =
        checks.into_iter().map(|(suite, check_name, f)| check(suite, check_name, f)).collect();
    let n_passed = results.iter().filter(|c| c.passed).count();
    Ok(ValidationReport {
        schema_version: crate::runner::SCHEMA_VERSION,
        suite: name.to_string(),
        n_passed,
        n_failed: results.len() - n_passed,
        checks: results,
    })
}
