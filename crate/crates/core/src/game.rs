//! Game abstraction: payoff evaluators, the two gradient fields, and
//! finite-difference oracles.
//!
//! A game exposes per-agent payoffs `f_i` and a team payoff `J` over joint
//! parameters. The independent field stacks each agent's own-block gradient
//! `grad_{theta_i} f_i`; the team field is the full gradient of `J`. Their
//! difference `e = u_ind - u_team` is the object the rest of the library
//! studies.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::layout::{AgentLayout, JointParams, LayoutError};

#[derive(Debug, Error)]
pub enum GameError {
    #[error("non-finite {what} evaluating game at theta={theta:?}")]
    NonFinite { what: &'static str, theta: Vec<f64> },
    #[error("game does not provide {0}")]
    Unsupported(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// A differentiable multi-agent game with a shared team objective.
///
/// Evaluators are pure: the same `theta` yields bit-identical outputs within
/// a process. Fields are reported in layout order with fixed summation order.
pub trait Game {
    fn layout(&self) -> &AgentLayout;

    /// Payoff `f_i` that agent `i` individually ascends.
    fn agent_payoff(&self, agent: usize, theta: &JointParams) -> Result<f64, GameError>;

    /// Team objective `J`.
    fn team_payoff(&self, theta: &JointParams) -> Result<f64, GameError>;

    /// Independent field: block `i` is `grad_{theta_i} f_i(theta)`.
    fn independent_field(&self, theta: &JointParams) -> Result<Vec<f64>, GameError>;

    /// Team field: `grad_theta J(theta)`.
    fn team_field(&self, theta: &JointParams) -> Result<Vec<f64>, GameError>;

    /// Jacobians `(H_ind, H_team)` of the two fields, for games that carry
    /// them in closed form.
    fn field_jacobians(&self, theta: &JointParams) -> Result<(DMatrix<f64>, DMatrix<f64>), GameError> {
        let _ = theta;
        Err(GameError::Unsupported("analytic field Jacobians"))
    }

    fn has_analytic_jacobians(&self) -> bool {
        false
    }

    /// Exact Lipschitz constant of `grad V` where available (affine-field
    /// games: `lambda_max((M - Q)^T (M - Q))`).
    fn exact_smoothness(&self) -> Option<f64> {
        None
    }
}

/// Both fields at one point, with the disagreement vector and gap.
#[derive(Debug, Clone)]
pub struct FieldSample {
    pub u_ind: Vec<f64>,
    pub u_team: Vec<f64>,
    /// `e = u_ind - u_team`.
    pub e: Vec<f64>,
    /// `v = 0.5 * ||e||^2`, computed from the stored `e`.
    pub v: f64,
}

impl FieldSample {
    pub fn evaluate(game: &dyn Game, theta: &JointParams) -> Result<Self, GameError> {
        let u_ind = game.independent_field(theta)?;
        let u_team = game.team_field(theta)?;
        if u_ind.len() != u_team.len() {
            return Err(GameError::Dimension(format!(
                "independent field has {} entries, team field {}",
                u_ind.len(),
                u_team.len()
            )));
        }
        let e: Vec<f64> = u_ind.iter().zip(&u_team).map(|(a, b)| a - b).collect();
        let v = 0.5 * e.iter().map(|x| x * x).sum::<f64>();
        if !v.is_finite() {
            return Err(GameError::NonFinite { what: "rationality gap", theta: theta.values().to_vec() });
        }
        Ok(Self { u_ind, u_team, e, v })
    }
}

/// Default central-difference step for the FD oracles.
#[must_use]
pub fn default_fd_step(theta: &JointParams) -> f64 {
    let max_abs = theta.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    (1e-7 * max_abs).max(1e-5)
}

/// Central-difference gradient of a scalar function, probing coordinates in
/// index order. Cost: 2D evaluations.
pub fn fd_gradient<F>(f: F, theta: &JointParams, step: f64) -> Result<Vec<f64>, GameError>
where
    F: Fn(&JointParams) -> Result<f64, GameError>,
{
    if !(step.is_finite() && step > 0.0) {
        return Err(GameError::Numerical(format!("FD step must be positive and finite, got {step}")));
    }
    let mut grad = Vec::with_capacity(theta.dim());
    for j in 0..theta.dim() {
        let plus = f(&theta.perturbed(j, step)?)?;
        let minus = f(&theta.perturbed(j, -step)?)?;
        let g = (plus - minus) / (2.0 * step);
        if !g.is_finite() {
            return Err(GameError::NonFinite { what: "FD quotient", theta: theta.values().to_vec() });
        }
        grad.push(g);
    }
    Ok(grad)
}

/// Splits a field Jacobian into symmetric and antisymmetric parts
/// `(0.5 (M + M^T), 0.5 (M - M^T))`. The antisymmetric part is the rotational
/// component that makes a field non-conservative.
#[must_use]
pub fn field_decomposition(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let mt = m.transpose();
    (0.5 * (m + &mt), 0.5 * (m - &mt))
}
