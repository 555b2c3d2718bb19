//! Quadratic games: every payoff is an exact quadratic form, so both fields
//! are affine and every object the library computes has a closed form.
//!
//! Agent `i` ascends `f_i = 0.5 theta^T Q_i theta + b_i^T theta`; the team
//! objective is `J = 0.5 theta^T Q theta + b^T theta`. Stacking the per-agent
//! block rows of `Q_i` gives the (generally non-symmetric) independent-field
//! matrix `M`, so `u_ind = M theta + c` and `u_team = Q theta + b`.

use nalgebra::{DMatrix, DVector};

use crate::game::{Game, GameError};
use crate::layout::{AgentLayout, JointParams};

use super::affine_gap_smoothness;

#[derive(Debug, Clone)]
pub struct QuadraticGame {
    q_i: Vec<DMatrix<f64>>,
    b_i: Vec<DVector<f64>>,
    q: DMatrix<f64>,
    b: DVector<f64>,
    layout: AgentLayout,
    /// Block rows of the `Q_i`, cached: `u_ind = m * theta + c`.
    m: DMatrix<f64>,
    c: DVector<f64>,
    smoothness: f64,
}

fn require_symmetric(m: &DMatrix<f64>, name: String) -> Result<(), GameError> {
    for r in 0..m.nrows() {
        for col in (r + 1)..m.ncols() {
            let (a, b) = (m[(r, col)], m[(col, r)]);
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(GameError::Dimension(format!(
                    "{name} is not symmetric: entry ({r},{col})={a} vs ({col},{r})={b}"
                )));
            }
        }
    }
    Ok(())
}

impl QuadraticGame {
    pub fn new(
        q_i: Vec<DMatrix<f64>>,
        b_i: Vec<DVector<f64>>,
        q: DMatrix<f64>,
        b: DVector<f64>,
        block_dims: Vec<usize>,
    ) -> Result<Self, GameError> {
        let layout = AgentLayout::new(block_dims)?;
        let d = layout.dim();
        let n = layout.n_agents();
        if q_i.len() != n || b_i.len() != n {
            return Err(GameError::Dimension(format!(
                "expected {n} per-agent payoffs, got {} matrices and {} vectors",
                q_i.len(),
                b_i.len()
            )));
        }
        for (i, qi) in q_i.iter().enumerate() {
            if qi.nrows() != d || qi.ncols() != d {
                return Err(GameError::Dimension(format!(
                    "Q_{i} is {}x{}, expected {d}x{d}",
                    qi.nrows(),
                    qi.ncols()
                )));
            }
            require_symmetric(qi, format!("Q_{i}"))?;
        }
        for (i, bi) in b_i.iter().enumerate() {
            if bi.len() != d {
                return Err(GameError::Dimension(format!("b_{i} has {} entries, expected {d}", bi.len())));
            }
        }
        if q.nrows() != d || q.ncols() != d {
            return Err(GameError::Dimension(format!("Q is {}x{}, expected {d}x{d}", q.nrows(), q.ncols())));
        }
        require_symmetric(&q, "Q".to_string())?;
        if b.len() != d {
            return Err(GameError::Dimension(format!("b has {} entries, expected {d}", b.len())));
        }

        let mut m = DMatrix::zeros(d, d);
        let mut c = DVector::zeros(d);
        for i in 0..n {
            for row in layout.block(i) {
                m.set_row(row, &q_i[i].row(row));
                c[row] = b_i[i][row];
            }
        }
        let smoothness = affine_gap_smoothness(&m, &q);
        Ok(Self { q_i, b_i, q, b, layout, m, c, smoothness })
    }

    /// Two scalar agents whose private payoff *is* the team payoff
    /// `-0.5 ||theta||^2`, so the fields agree and the gap is identically
    /// zero. Useful as the degenerate fixture where every update law must
    /// coincide.
    #[must_use]
    pub fn shared_payoff_pair() -> Self {
        let q = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        Self::new(
            vec![q.clone(), q.clone()],
            vec![DVector::zeros(2), DVector::zeros(2)],
            q,
            DVector::zeros(2),
            vec![1, 1],
        )
        .expect("fixture is well-formed")
    }

    /// Independent-field matrix `M` (block rows of the `Q_i`).
    #[must_use]
    pub fn independent_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    #[must_use]
    pub fn team_matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    fn vec(&self, theta: &JointParams) -> DVector<f64> {
        DVector::from_column_slice(theta.values())
    }
}

impl Game for QuadraticGame {
    fn layout(&self) -> &AgentLayout {
        &self.layout
    }

    fn agent_payoff(&self, agent: usize, theta: &JointParams) -> Result<f64, GameError> {
        let t = self.vec(theta);
        let f = 0.5 * (t.transpose() * &self.q_i[agent] * &t)[(0, 0)] + self.b_i[agent].dot(&t);
        if !f.is_finite() {
            return Err(GameError::NonFinite { what: "agent payoff", theta: theta.values().to_vec() });
        }
        Ok(f)
    }

    fn team_payoff(&self, theta: &JointParams) -> Result<f64, GameError> {
        let t = self.vec(theta);
        let j = 0.5 * (t.transpose() * &self.q * &t)[(0, 0)] + self.b.dot(&t);
        if !j.is_finite() {
            return Err(GameError::NonFinite { what: "team payoff", theta: theta.values().to_vec() });
        }
        Ok(j)
    }

    fn independent_field(&self, theta: &JointParams) -> Result<Vec<f64>, GameError> {
        let u = &self.m * self.vec(theta) + &self.c;
        Ok(u.as_slice().to_vec())
    }

    fn team_field(&self, theta: &JointParams) -> Result<Vec<f64>, GameError> {
        let u = &self.q * self.vec(theta) + &self.b;
        Ok(u.as_slice().to_vec())
    }

    fn field_jacobians(&self, _theta: &JointParams) -> Result<(DMatrix<f64>, DMatrix<f64>), GameError> {
        Ok((self.m.clone(), self.q.clone()))
    }

    fn has_analytic_jacobians(&self) -> bool {
        true
    }

    fn exact_smoothness(&self) -> Option<f64> {
        Some(self.smoothness)
    }
}
