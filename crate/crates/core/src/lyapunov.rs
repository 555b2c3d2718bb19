//! The rationality-gap potential `V` and its gradient, the stability normal.
//!
//! `V(theta) = 0.5 ||u_ind(theta) - u_team(theta)||^2` measures how far
//! independent ascent disagrees with the team gradient. Its gradient
//! `h = grad V = (H_ind - H_team)^T (u_ind - u_team)` defines the half-space
//! that the projection module enforces. Where `V > 0` with `h = 0` (a
//! non-minimizing critical point) this module reports `h` as-is; the
//! projection's epsilon damping handles that corner downstream.

use serde::{Deserialize, Serialize};

use crate::game::{fd_gradient, FieldSample, Game, GameError};
use crate::layout::JointParams;

/// `V = 0.5 ||u_ind - u_team||^2`.
#[must_use]
pub fn rationality_gap(u_ind: &[f64], u_team: &[f64]) -> f64 {
    assert_eq!(u_ind.len(), u_team.len(), "fields must share a dimension");
    0.5 * u_ind
        .iter()
        .zip(u_team)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
}

/// `h = (H_ind - H_team)^T e` from closed-form Jacobians.
pub fn stability_normal_analytic(game: &dyn Game, theta: &JointParams) -> Result<Vec<f64>, GameError> {
    let (h_ind, h_team) = game.field_jacobians(theta)?;
    let sample = FieldSample::evaluate(game, theta)?;
    let diff = h_ind - h_team;
    let e = nalgebra::DVector::from_column_slice(&sample.e);
    let h = diff.transpose() * e;
    Ok(h.as_slice().to_vec())
}

/// `h = grad V` by central differences of the gap itself; works for any game,
/// at the cost of `2 D` field-pair evaluations.
pub fn stability_normal_fd(game: &dyn Game, theta: &JointParams, step: f64) -> Result<Vec<f64>, GameError> {
    fd_gradient(
        |t| FieldSample::evaluate(game, t).map(|s| s.v),
        theta,
        step,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothnessMethod {
    /// Closed-form `lambda_max((M - Q)^T (M - Q))` from the game.
    Exact,
    /// `1.5 x` the largest observed difference quotient of `h` over sample
    /// pairs.
    EmpiricalSup,
}

/// Lipschitz constant of `grad V`, used by the adaptive step rule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SmoothnessEstimate {
    pub l: f64,
    pub method: SmoothnessMethod,
    pub sample_count: usize,
    /// All sampled difference quotients were degenerate; `l` is the floor.
    pub degenerate: bool,
}

/// Safety margin applied to the empirical supremum.
pub const EMPIRICAL_MARGIN: f64 = 1.5;
/// Floor for degenerate empirical estimates.
pub const SMOOTHNESS_FLOOR: f64 = 1e-12;

/// Returns the exact smoothness constant when the game carries one, otherwise
/// the inflated empirical supremum over the provided sample points.
pub fn smoothness_estimate(
    game: &dyn Game,
    theta_samples: &[JointParams],
    fd_step: f64,
) -> Result<SmoothnessEstimate, GameError> {
    if let Some(l) = game.exact_smoothness() {
        return Ok(SmoothnessEstimate {
            l,
            method: SmoothnessMethod::Exact,
            sample_count: 0,
            degenerate: false,
        });
    }
    if theta_samples.len() < 2 {
        return Err(GameError::Numerical(format!(
            "empirical smoothness needs at least 2 sample points, got {}",
            theta_samples.len()
        )));
    }
    let normals: Vec<Vec<f64>> = theta_samples
        .iter()
        .map(|t| {
            if game.has_analytic_jacobians() {
                stability_normal_analytic(game, t)
            } else {
                stability_normal_fd(game, t, fd_step)
            }
        })
        .collect::<Result<_, _>>()?;
    let mut sup = 0.0_f64;
    for a in 0..theta_samples.len() {
        for b in (a + 1)..theta_samples.len() {
            let dt: f64 = theta_samples[a]
                .values()
                .iter()
                .zip(theta_samples[b].values())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            if dt <= 1e-12 {
                continue;
            }
            let dh: f64 = normals[a]
                .iter()
                .zip(&normals[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            sup = sup.max(dh / dt);
        }
    }
    let degenerate = sup <= SMOOTHNESS_FLOOR;
    Ok(SmoothnessEstimate {
        l: if degenerate { SMOOTHNESS_FLOOR } else { EMPIRICAL_MARGIN * sup },
        method: SmoothnessMethod::EmpiricalSup,
        sample_count: theta_samples.len(),
        degenerate,
    })
}
