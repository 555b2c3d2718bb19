//! Property suite for the half-space projection and the direction-surgery
//! helpers: agreement with the independent oracle, KKT residuals, the damped
//! identity, minimality, idempotence, homogeneity, and the invariants of
//! `align_rectify` and `pcgrad_surgery`.

use proptest::prelude::*;

use halypo_core::{
    align_rectify, halfspace_oracle, halypo_project, kkt_residuals, pcgrad_surgery, AgentLayout,
    ProjectionError, Regime,
};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sub_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `(u, h, v, sigma)` with both vectors the same dimension.
fn instance(max_dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64, f64)> {
    (1..=max_dim).prop_flat_map(|d| {
        (
            prop::collection::vec(-10.0..10.0f64, d),
            prop::collection::vec(-10.0..10.0f64, d),
            0.0..10.0f64,
            0.1..10.0f64,
        )
    })
}

proptest! {
    #[test]
    fn matches_the_independent_oracle((u, h, v, sigma) in instance(32)) {
        prop_assume!(norm(&h) >= 1e-6);
        let p = halypo_project(&u, &h, v, sigma, 0.0).unwrap();
        let o = halfspace_oracle(&u, &h, -sigma * v).unwrap();
        let rel = sub_norm(&p.d_star, &o) / (1.0 + norm(&o));
        prop_assert!(rel <= 1e-9, "relative gap to oracle {rel:.3e}");
    }

    #[test]
    fn undamped_kkt_residuals_vanish((u, h, v, sigma) in instance(32)) {
        prop_assume!(norm(&h) >= 1e-6);
        let p = halypo_project(&u, &h, v, sigma, 0.0).unwrap();
        let r = kkt_residuals(&p, &u, &h, v, sigma, 0.0);
        let scale = 1.0 + norm(&u) + sigma * v;
        prop_assert!(r.stationarity <= 1e-10 * scale);
        prop_assert!(r.feasibility <= 1e-10 * scale);
        prop_assert!(r.slackness <= 1e-10 * scale);
    }

    #[test]
    fn active_regime_exactly_when_the_raw_update_is_unsafe((u, h, v, sigma) in instance(32)) {
        prop_assume!(norm(&h) >= 1e-6);
        let numerator = dot(&h, &u) + sigma * v;
        let p = halypo_project(&u, &h, v, sigma, 0.0).unwrap();
        if numerator > 0.0 {
            prop_assert_eq!(p.regime, Regime::Active);
            prop_assert!(p.lambda_star > 0.0);
        } else {
            prop_assert_eq!(p.regime, Regime::Inactive);
            prop_assert_eq!(p.lambda_star, 0.0);
            // Inactive means the independent update already dissipates.
            prop_assert_eq!(p.d_star.clone(), u);
        }
    }

    #[test]
    fn damped_projection_satisfies_the_epsilon_identity(
        (u, h, v, sigma) in instance(32),
        epsilon in 1e-8..1e-2f64,
    ) {
        prop_assume!(norm(&h) >= 1e-6);
        prop_assume!(dot(&h, &u) + sigma * v > 1e-9);
        let p = halypo_project(&u, &h, v, sigma, epsilon).unwrap();
        let residual = dot(&h, &p.d_star) + sigma * v;
        // The damped optimum leaves exactly epsilon * lambda* of slack.
        let scale = 1.0 + (dot(&h, &u) + sigma * v).abs();
        prop_assert!(
            (residual - epsilon * p.lambda_star).abs() <= 1e-9 * scale,
            "identity residual {:.3e}",
            residual - epsilon * p.lambda_star
        );
    }

    #[test]
    fn no_feasible_point_is_closer((u, h, v, sigma) in instance(16), seed_w in prop::collection::vec(-20.0..20.0f64, 16)) {
        prop_assume!(norm(&h) >= 1e-6);
        let d = u.len();
        let w = &seed_w[..d];
        // Project an arbitrary point onto the constraint to get a feasible
        // competitor, then check it never beats d*.
        let h_sq = dot(&h, &h);
        let overshoot = ((dot(&h, w) + sigma * v) / h_sq).max(0.0);
        let z: Vec<f64> = w.iter().zip(&h).map(|(wi, hi)| wi - overshoot * hi).collect();
        prop_assume!(dot(&h, &z) + sigma * v <= 1e-9 * (1.0 + sigma * v));
        let p = halypo_project(&u, &h, v, sigma, 0.0).unwrap();
        let tol = 1e-9 * (1.0 + norm(&u) + norm(&z));
        prop_assert!(sub_norm(&p.d_star, &u) <= sub_norm(&z, &u) + tol);
    }

    #[test]
    fn reprojection_is_a_fixed_point((u, h, v, sigma) in instance(32)) {
        prop_assume!(norm(&h) >= 1e-6);
        let first = halypo_project(&u, &h, v, sigma, 0.0).unwrap();
        let second = halypo_project(&first.d_star, &h, v, sigma, 0.0).unwrap();
        let rel = sub_norm(&second.d_star, &first.d_star) / (1.0 + norm(&first.d_star));
        prop_assert!(rel <= 1e-12, "re-projection drifted by {rel:.3e}");
    }

    #[test]
    fn projection_is_positively_homogeneous(
        (u, h, v, sigma) in instance(16),
        c in 0.01..100.0f64,
    ) {
        prop_assume!(norm(&h) >= 1e-3);
        let base = halypo_project(&u, &h, v, sigma, 0.0).unwrap();
        let cu: Vec<f64> = u.iter().map(|x| c * x).collect();
        let ch: Vec<f64> = h.iter().map(|x| c * x).collect();
        let scaled = halypo_project(&cu, &ch, c * c * v, sigma, 0.0).unwrap();
        // Scaling (u, h, V) by (c, c, c^2) leaves lambda* and the regime
        // unchanged and scales d* linearly.
        prop_assert_eq!(scaled.regime, base.regime);
        prop_assert!((scaled.lambda_star - base.lambda_star).abs() <= 1e-12 * (1.0 + base.lambda_star));
        for (s, b) in scaled.d_star.iter().zip(&base.d_star) {
            prop_assert!((s - c * b).abs() <= 1e-12 * (1.0 + (c * b).abs()) * c.max(1.0));
        }
    }

    #[test]
    fn align_rectify_never_hurts_the_team(
        (d, t) in (1..=16usize).prop_flat_map(|n| (
            prop::collection::vec(-10.0..10.0f64, n),
            prop::collection::vec(-10.0..10.0f64, n),
        )),
    ) {
        let r = align_rectify(&d, &t);
        let scale = 1.0 + norm(&d) * norm(&t);
        // Team inner product never decreases; a firing rectification lands
        // exactly on the orthogonal hyperplane.
        prop_assert!(dot(&r, &t) >= dot(&d, &t).min(0.0) - 1e-9 * scale);
        if dot(&d, &t) >= 0.0 || norm(&t) == 0.0 {
            prop_assert_eq!(r.clone(), d.clone());
        } else {
            prop_assert!(dot(&r, &t).abs() <= 1e-9 * scale);
        }
        // The norm never grows: rectification is an orthogonal projection.
        prop_assert!(norm(&r) <= norm(&d) * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn pcgrad_clears_only_conflicting_blocks(
        (dims, u, t) in (1..=3usize).prop_flat_map(|n| prop::collection::vec(1..=4usize, n))
            .prop_flat_map(|dims| {
                let total: usize = dims.iter().sum();
                (
                    Just(dims),
                    prop::collection::vec(-10.0..10.0f64, total),
                    prop::collection::vec(-10.0..10.0f64, total),
                )
            }),
    ) {
        let layout = AgentLayout::new(dims).unwrap();
        let r = pcgrad_surgery(&layout, &u, &t);
        for i in 0..layout.n_agents() {
            let range = layout.block(i);
            let (ui, ti, ri) = (&u[range.clone()], &t[range.clone()], &r[range]);
            let scale = 1.0 + norm(ui) * norm(ti);
            if dot(ui, ti) < 0.0 {
                // Conflicting block: its projection onto the team block is
                // removed, leaving a non-negative inner product.
                prop_assert!(dot(ri, ti).abs() <= 1e-9 * scale);
            } else {
                prop_assert_eq!(ri.to_vec(), ui.to_vec());
            }
        }
    }
}

// --- error branches -----------------------------------------------------------

#[test]
fn zero_normal_with_positive_gap_is_infeasible_undamped() {
    let err = halypo_project(&[1.0, 2.0], &[0.0, 0.0], 1.0, 1.0, 0.0).unwrap_err();
    assert!(matches!(err, ProjectionError::Infeasible { .. }));
}

#[test]
fn zero_normal_with_positive_gap_degrades_gracefully_when_damped() {
    // epsilon > 0 keeps the problem feasible: lambda* = numerator / epsilon
    // multiplies a zero normal, so the direction passes through.
    let p = halypo_project(&[1.0, 2.0], &[0.0, 0.0], 1.0, 1.0, 1e-6).unwrap();
    assert_eq!(p.d_star, vec![1.0, 2.0]);
    assert!(p.lambda_star > 0.0);
}

#[test]
fn non_finite_inputs_are_rejected() {
    assert!(halypo_project(&[f64::NAN], &[1.0], 1.0, 1.0, 0.0).is_err());
    assert!(halypo_project(&[1.0], &[1.0], -1.0, 1.0, 0.0).is_err());
    assert!(halypo_project(&[1.0], &[1.0], 1.0, 0.0, 0.0).is_err());
    assert!(halypo_project(&[1.0], &[1.0, 2.0], 1.0, 1.0, 0.0).is_err());
}
