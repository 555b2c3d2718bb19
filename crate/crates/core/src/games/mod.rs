//! Analytically tractable game fixtures.

mod bilinear;
pub mod markov;
mod quadratic;

pub use bilinear::BilinearRotationGame;
pub use markov::{
    exact_policy_gradient, policy_eval, stale_critic_field, CriticSnapshot, MarkovError,
    MarkovSpec, PolicyEvalResult, StaleCriticView, TabularMarkovGame,
};
pub use quadratic::QuadraticGame;

use nalgebra::DMatrix;

/// Smoothness constant of the gap potential for affine fields
/// `u_ind = M theta + c`, `u_team = Q theta + b`: the potential is exactly
/// quadratic with Hessian `(M - Q)^T (M - Q)`, so its gradient is Lipschitz
/// with constant `lambda_max` of that product.
pub(crate) fn affine_gap_smoothness(m: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let a = m - q;
    let ata = a.transpose() * &a;
    let eig = ata.symmetric_eigen();
    eig.eigenvalues.iter().fold(0.0_f64, |acc, &l| acc.max(l))
}

/// The worked two-agent scalar example used across the test suites:
/// `Q_1 = [[-1, 2], [2, 0]]`, `Q_2 = [[0, -2], [-2, -1]]`, `Q = -I`, `b = 0`.
/// Its independent-field matrix is `M = [[-1, 2], [-2, -1]]` and the gap
/// potential is `V = 2 ||theta||^2` with smoothness constant 4.
#[must_use]
pub fn q_example() -> QuadraticGame {
    use nalgebra::DVector;
    QuadraticGame::new(
        vec![
            DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 2.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, -2.0, -2.0, -1.0]),
        ],
        vec![DVector::zeros(2), DVector::zeros(2)],
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]),
        DVector::zeros(2),
        vec![1, 1],
    )
    .expect("worked example is well-formed")
}
