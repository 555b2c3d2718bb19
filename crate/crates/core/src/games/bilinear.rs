//! Two-agent bilinear rotation game, the minimal pathology fixture.
//!
//! Agent 1 controls `x` and ascends `f_1 = x y`; agent 2 controls `y` and
//! ascends `f_2 = -x y`; the team objective is `J = -0.5 (x^2 + y^2)`.
//! The independent field `u_ind = (y, -x)` is pure rotation: ascending it
//! with any constant step grows the radius exactly by `1 + eta^2` per step,
//! while the gap potential is `V = x^2 + y^2` with stability normal
//! `h = (2x, 2y)` and smoothness constant 2.

use nalgebra::DMatrix;

use crate::game::{Game, GameError};
use crate::layout::{AgentLayout, JointParams};

#[derive(Debug, Clone)]
pub struct BilinearRotationGame {
    layout: AgentLayout,
}

impl Default for BilinearRotationGame {
    fn default() -> Self {
        Self::new()
    }
}

impl BilinearRotationGame {
    #[must_use]
    pub fn new() -> Self {
        Self { layout: AgentLayout::new(vec![1, 1]).expect("two scalar agents") }
    }
}

impl Game for BilinearRotationGame {
    fn layout(&self) -> &AgentLayout {
        &self.layout
    }

    fn agent_payoff(&self, agent: usize, theta: &JointParams) -> Result<f64, GameError> {
        let (x, y) = (theta.values()[0], theta.values()[1]);
        Ok(match agent {
            0 => x * y,
            1 => -x * y,
            _ => return Err(GameError::Dimension(format!("agent index {agent} out of range"))),
        })
    }

    fn team_payoff(&self, theta: &JointParams) -> Result<f64, GameError> {
        let (x, y) = (theta.values()[0], theta.values()[1]);
        Ok(-0.5 * (x * x + y * y))
    }

    fn independent_field(&self, theta: &JointParams) -> Result<Vec<f64>, GameError> {
        let (x, y) = (theta.values()[0], theta.values()[1]);
        Ok(vec![y, -x])
    }

    fn team_field(&self, theta: &JointParams) -> Result<Vec<f64>, GameError> {
        let (x, y) = (theta.values()[0], theta.values()[1]);
        Ok(vec![-x, -y])
    }

    fn field_jacobians(&self, _theta: &JointParams) -> Result<(DMatrix<f64>, DMatrix<f64>), GameError> {
        Ok((
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]),
        ))
    }

    fn has_analytic_jacobians(&self) -> bool {
        true
    }

    fn exact_smoothness(&self) -> Option<f64> {
        // (M - Q)^T (M - Q) = 2 I for M = [[0,1],[-1,0]], Q = -I.
        Some(2.0)
    }
}
