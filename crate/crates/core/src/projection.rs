//! Closed-form half-space projection of the independent field.
//!
//! The update direction solves
//!
//! ```text
//! min ||d - u_ind||^2   s.t.   <h, d> <= -sigma V
//! ```
//!
//! whose KKT system has the closed form
//!
//! ```text
//! lambda* = max(0, (<h, u_ind> + sigma V) / (||h||^2 + epsilon))
//! d*      = u_ind - lambda* h
//! ```
//!
//! With `epsilon = 0` the active case lands exactly on the constraint
//! boundary; `epsilon > 0` trades exact feasibility for damping, leaving the
//! identity `<h, d*> + sigma V = epsilon lambda*`. The independent
//! [`halfspace_oracle`] recomputes the projection from the generic
//! point-to-half-space formula and audits minimality with random feasible
//! perturbations; the two routes are compared, never merged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("infeasible projection: ||h|| = 0 with positive numerator {numerator} and epsilon = 0")]
    Infeasible { numerator: f64 },
    #[error("invalid projection input: {0}")]
    BadInput(String),
    #[error("optimality audit failed: perturbation {index} is {delta:.3e} closer than the projection")]
    AuditFailed { index: usize, delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Constraint already satisfied by `u_ind`; `lambda* = 0`.
    Inactive,
    /// Projection onto the boundary (or its damped variant).
    Active,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Inactive => "inactive",
            Regime::Active => "active",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionResult {
    pub d_star: Vec<f64>,
    pub lambda_star: f64,
    pub regime: Regime,
    /// `<h, d*> + sigma V`, recomputed from the returned direction.
    pub constraint_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_inputs(u_ind: &[f64], h: &[f64], v: f64, sigma: f64, epsilon: f64) -> Result<(), ProjectionError> {
    if u_ind.len() != h.len() {
        return Err(ProjectionError::BadInput(format!(
            "u_ind has {} entries, h has {}",
            u_ind.len(),
            h.len()
        )));
    }
    if u_ind.iter().chain(h).any(|x| !x.is_finite()) {
        return Err(ProjectionError::BadInput("non-finite entry in u_ind or h".into()));
    }
    if !v.is_finite() || v < 0.0 {
        return Err(ProjectionError::BadInput(format!("V must be finite and >= 0, got {v}")));
    }
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(ProjectionError::BadInput(format!("sigma must be positive, got {sigma}")));
    }
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(ProjectionError::BadInput(format!("epsilon must be >= 0, got {epsilon}")));
    }
    Ok(())
}

/// Closed-form KKT solution of the projection QP.
pub fn halypo_project(
    u_ind: &[f64],
    h: &[f64],
    v: f64,
    sigma: f64,
    epsilon: f64,
) -> Result<ProjectionResult, ProjectionError> {
    check_inputs(u_ind, h, v, sigma, epsilon)?;
    let numerator = dot(h, u_ind) + sigma * v;
    let h_sq = dot(h, h);
    let (lambda_star, regime, d_star) = if numerator > 0.0 {
        let denom = h_sq + epsilon;
        if denom == 0.0 {
            return Err(ProjectionError::Infeasible { numerator });
        }
        // epsilon > 0 with ||h|| = 0 degrades gracefully to a large damped
        // correction lambda* = numerator / epsilon (which then multiplies a
        // zero h, leaving d* = u_ind).
        let lambda = numerator / denom;
        let d: Vec<f64> = u_ind.iter().zip(h).map(|(u, hh)| u - lambda * hh).collect();
        (lambda, Regime::Active, d)
    } else {
        (0.0, Regime::Inactive, u_ind.to_vec())
    };
    let constraint_residual = dot(h, &d_star) + sigma * v;
    Ok(ProjectionResult { d_star, lambda_star, regime, constraint_residual })
}

/// Number of random feasible perturbations the oracle checks.
pub const AUDIT_SAMPLES: usize = 200;

/// Independent projection route: Euclidean projection of `u` onto the
/// half-space `{ d : <h, d> <= c } `, plus a randomized minimality audit.
/// Written from the generic projection formula, deliberately not sharing the
/// KKT code path.
pub fn halfspace_oracle(u: &[f64], h: &[f64], c: f64) -> Result<Vec<f64>, ProjectionError> {
    if u.len() != h.len() {
        return Err(ProjectionError::BadInput(format!(
            "u has {} entries, h has {}",
            u.len(),
            h.len()
        )));
    }
    if u.iter().chain(h).any(|x| !x.is_finite()) || !c.is_finite() {
        return Err(ProjectionError::BadInput("non-finite oracle input".into()));
    }
    let hu = dot(h, u);
    let h_sq = dot(h, h);
    let projected = if hu <= c {
        u.to_vec()
    } else {
        if h_sq == 0.0 {
            return Err(ProjectionError::Infeasible { numerator: hu - c });
        }
        let shift = (hu - c) / h_sq;
        u.iter().zip(h).map(|(ui, hi)| ui - shift * hi).collect()
    };

    // Minimality audit: no feasible perturbation of the answer may be closer
    // to u. Deterministic seed; perturbations are re-projected to stay
    // feasible.
    let dist_sq = |a: &[f64]| -> f64 { a.iter().zip(u).map(|(x, y)| (x - y) * (x - y)).sum() };
    let base = dist_sq(&projected);
    let scale = 0.5 * (1.0 + base.sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(0x48414c59);
    for index in 0..AUDIT_SAMPLES {
        let mut cand: Vec<f64> = projected
            .iter()
            .map(|p| p + scale * (rng.gen::<f64>() * 2.0 - 1.0))
            .collect();
        let hc = dot(h, &cand);
        if hc > c {
            if h_sq == 0.0 {
                continue;
            }
            let shift = (hc - c) / h_sq;
            for (ci, hi) in cand.iter_mut().zip(h) {
                *ci -= shift * hi;
            }
        }
        let d = dist_sq(&cand);
        if d < base - 1e-9 * (1.0 + base) {
            return Err(ProjectionError::AuditFailed { index, delta: base - d });
        }
    }
    Ok(projected)
}

/// KKT residual triple for a projection result.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KktResiduals {
    /// `||d* - u_ind + lambda* h||`.
    pub stationarity: f64,
    /// `max(0, <h,d*> + sigma V)` for `epsilon = 0`; the raw residual for
    /// `epsilon > 0` (where the identity value is `epsilon lambda*`).
    pub feasibility: f64,
    /// `|lambda* (<h,d*> + sigma V)|`; equals `epsilon lambda*^2` when damped.
    pub slackness: f64,
}

pub fn kkt_residuals(
    result: &ProjectionResult,
    u_ind: &[f64],
    h: &[f64],
    v: f64,
    sigma: f64,
    epsilon: f64,
) -> KktResiduals {
    let stationarity = result
        .d_star
        .iter()
        .zip(u_ind)
        .zip(h)
        .map(|((d, u), hh)| {
            let r = d - u + result.lambda_star * hh;
            r * r
        })
        .sum::<f64>()
        .sqrt();
    let raw = dot(h, &result.d_star) + sigma * v;
    let feasibility = if epsilon == 0.0 { raw.max(0.0) } else { raw };
    KktResiduals { stationarity, feasibility, slackness: (result.lambda_star * raw).abs() }
}
