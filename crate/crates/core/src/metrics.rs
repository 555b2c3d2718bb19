//! Mechanism diagnostics: alignment, conflict rate, gap decay, the per-step
//! descent certificate, and windowed run summaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::AgentLayout;
use crate::optim::TrajectoryLog;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("window must be nonempty")]
    EmptyWindow,
    #[error("window of {window} exceeds the {len} available records")]
    WindowTooLong { window: usize, len: usize },
    #[error("decay rate needs at least 2 usable points, found {usable}")]
    TooFewPoints { usable: usize },
}

/// Norms below this make the cosine undefined.
pub const ALIGNMENT_EPS: f64 = 1e-12;

/// Values at or below this are treated as numerically zero by the decay rate.
pub const DECAY_FLOOR: f64 = 1e-300;

/// Cosine of the angle between the two fields; `None` when either norm is
/// below [`ALIGNMENT_EPS`].
#[must_use]
pub fn alignment(u_ind: &[f64], u_team: &[f64]) -> Option<f64> {
    assert_eq!(u_ind.len(), u_team.len());
    let ni = u_ind.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nt = u_team.iter().map(|x| x * x).sum::<f64>().sqrt();
    if ni < ALIGNMENT_EPS || nt < ALIGNMENT_EPS {
        return None;
    }
    let ip: f64 = u_ind.iter().zip(u_team).map(|(a, b)| a * b).sum();
    Some(ip / (ni * nt))
}

/// A step conflicts iff some agent block has `<u_ind[i], u_team[i]> < 0` with
/// both block norms at least [`ALIGNMENT_EPS`].
#[must_use]
pub fn block_conflict(layout: &AgentLayout, u_ind: &[f64], u_team: &[f64]) -> bool {
    (0..layout.n_agents()).any(|i| {
        let range = layout.block(i);
        let ui = &u_ind[range.clone()];
        let ti = &u_team[range];
        let ni = ui.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nt = ti.iter().map(|x| x * x).sum::<f64>().sqrt();
        ni >= ALIGNMENT_EPS
            && nt >= ALIGNMENT_EPS
            && ui.iter().zip(ti).map(|(a, b)| a * b).sum::<f64>() < 0.0
    })
}

/// Fraction of the last `window` records whose conflict flag is set.
pub fn conflict_rate(log: &TrajectoryLog, window: usize) -> Result<f64, MetricsError> {
    if window == 0 {
        return Err(MetricsError::EmptyWindow);
    }
    if window > log.records.len() {
        return Err(MetricsError::WindowTooLong { window, len: log.records.len() });
    }
    let tail = &log.records[log.records.len() - window..];
    let hits = tail.iter().filter(|r| r.conflict).count();
    Ok(hits as f64 / window as f64)
}

/// Mean per-step log-ratio of the gap, with the number of pairs that were
/// excluded because a value sat at or below [`DECAY_FLOOR`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayEstimate {
    /// Mean of `ln(V_{k+1} / V_k)`; negative means contraction.
    pub rate: f64,
    pub excluded: usize,
}

/// Decay rate over the last `window` values of `v_series`.
pub fn decay_rate(v_series: &[f64], window: usize) -> Result<DecayEstimate, MetricsError> {
    if window < 2 {
        return Err(MetricsError::TooFewPoints { usable: window });
    }
    if window > v_series.len() {
        return Err(MetricsError::WindowTooLong { window, len: v_series.len() });
    }
    let tail = &v_series[v_series.len() - window..];
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut excluded = 0usize;
    for pair in tail.windows(2) {
        if pair[0] > DECAY_FLOOR && pair[1] > DECAY_FLOOR {
            sum += (pair[1] / pair[0]).ln();
            used += 1;
        } else {
            excluded += 1;
        }
    }
    if used == 0 {
        return Err(MetricsError::TooFewPoints { usable: 0 });
    }
    Ok(DecayEstimate { rate: sum / used as f64, excluded })
}

/// Per-step descent certificate
/// `V_{k+1} - V_k <= -eta sigma V_k + (L eta^2 / 2) ||d*||^2`.
///
/// Returns `(holds, slack)` where `slack` is the right-hand side minus the
/// observed drop; the inequality is granted a `1e-9 * (1 + V_k)` tolerance.
#[must_use]
pub fn descent_certificate_check(
    v_k: f64,
    v_next: f64,
    eta: f64,
    sigma: f64,
    l: f64,
    d_norm_sq: f64,
) -> (bool, f64) {
    let rhs = -eta * sigma * v_k + 0.5 * l * eta * eta * d_norm_sq;
    let slack = rhs - (v_next - v_k);
    (slack >= -1e-9 * (1.0 + v_k), slack)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryThresholds {
    /// First `V` below this counts as converged.
    pub v_conv: f64,
    /// Final-window width as a fraction of the record count.
    pub window_fraction: f64,
    /// Lower bound on the window (clipped to the record count).
    pub min_window: usize,
}

impl Default for SummaryThresholds {
    fn default() -> Self {
        Self { v_conv: 1e-6, window_fraction: 0.1, min_window: 10 }
    }
}

/// Windowed diagnostics of one run. `mean_alignment` averages the defined
/// cosines in the window and is `None` when every step was undefined;
/// `gap_decay_rate` is `None` when fewer than two windowed values are
/// positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSummary {
    #[serde(rename = "steady_state_V")]
    pub steady_state_v: f64,
    pub mean_alignment: Option<f64>,
    /// Gradient conflict rate over the window.
    pub gcr: f64,
    pub gap_decay_rate: Option<f64>,
    /// First `k` with `V_k < v_conv`, counting the final state as step `n`.
    pub convergence_step: Option<usize>,
}

/// Final-window width for a trajectory with `len` records.
#[must_use]
pub fn summary_window(len: usize, thresholds: &SummaryThresholds) -> usize {
    let frac = ((len as f64) * thresholds.window_fraction).ceil() as usize;
    frac.max(thresholds.min_window).max(1).min(len)
}

/// Aggregates a run into a [`MechanismSummary`].
///
/// # Panics
/// Panics if the log has no records.
#[must_use]
pub fn summarize(log: &TrajectoryLog, thresholds: &SummaryThresholds) -> MechanismSummary {
    assert!(!log.records.is_empty(), "summarize needs a nonempty trajectory");
    let window = summary_window(log.records.len(), thresholds);
    let v_series = log.v_series();

    let v_tail = &v_series[v_series.len() - window..];
    let steady_state_v = v_tail.iter().sum::<f64>() / window as f64;

    let tail = &log.records[log.records.len() - window..];
    let defined: Vec<f64> = tail.iter().filter_map(|r| r.cos_phi).collect();
    let mean_alignment = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };

    let gcr = conflict_rate(log, window).expect("window fits by construction");
    let gap_decay_rate =
        decay_rate(&v_series, (window + 1).min(v_series.len())).ok().map(|d| d.rate);
    let convergence_step = v_series.iter().position(|v| *v < thresholds.v_conv);

    MechanismSummary { steady_state_v, mean_alignment, gcr, gap_decay_rate, convergence_step }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::StepRecord;
    use crate::projection::Regime;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn alignment_cases() {
        assert_eq!(alignment(&[1.0, 0.0], &[1.0, 0.0]), Some(1.0));
        assert_eq!(alignment(&[1.0, 0.0], &[0.0, 1.0]), Some(0.0));
        assert_eq!(alignment(&[1.0, 0.0], &[-1.0, 0.0]), Some(-1.0));
        assert_eq!(alignment(&[0.0, 0.0], &[1.0, 0.0]), None);
        // Invariant to positive rescaling; negation flips the sign.
        let a = [0.3, -0.8];
        let b = [-0.5, 0.2];
        let base = alignment(&a, &b).unwrap();
        let scaled = alignment(&[a[0] * 7.0, a[1] * 7.0], &b).unwrap();
        assert_abs_diff_eq!(base, scaled, epsilon = 1e-15);
        let negated = alignment(&[-a[0], -a[1]], &b).unwrap();
        assert_abs_diff_eq!(base, -negated, epsilon = 1e-15);
    }

    #[test]
    fn conflict_flag_on_the_rotation_game_at_ones() {
        // theta = (1,1): u_ind = (1,-1), u_team = (-1,-1); agent 0 conflicts.
        let layout = AgentLayout::new(vec![1, 1]).unwrap();
        assert!(block_conflict(&layout, &[1.0, -1.0], &[-1.0, -1.0]));
        assert!(!block_conflict(&layout, &[1.0, -1.0], &[1.0, -1.0]));
        // Tiny block norms never count as conflict.
        assert!(!block_conflict(&layout, &[1e-15, -1.0], &[-1.0, -1.0]));
    }

    #[test]
    fn certificate_slack_is_exact_on_the_rotation_step() {
        // V_k=1, eta=0.1, sigma=1, L=2, ||d*||^2=1.25, V_next=0.9125:
        // rhs = -0.1 + 0.0125 = -0.0875, observed drop identical.
        let (holds, slack) = descent_certificate_check(1.0, 0.9125, 0.1, 1.0, 2.0, 1.25);
        assert!(holds);
        assert_abs_diff_eq!(slack, 0.0, epsilon = 1e-15);
        // Flat step against a strictly negative budget is a violation.
        let (holds, slack) = descent_certificate_check(1.0, 1.0, 0.1, 1.0, 2.0, 0.0);
        assert!(!holds);
        assert_abs_diff_eq!(slack, -0.1, epsilon = 1e-15);
        // Fixed point: zero on both sides.
        let (holds, slack) = descent_certificate_check(0.0, 0.0, 0.3, 1.0, 2.0, 0.0);
        assert!(holds);
        assert_eq!(slack, 0.0);
    }

    #[test]
    fn decay_rate_cases() {
        let flat = vec![0.5; 20];
        assert_abs_diff_eq!(decay_rate(&flat, 20).unwrap().rate, 0.0, epsilon = 1e-15);
        let geo: Vec<f64> = (0..50).map(|k| 0.9125_f64.powi(k)).collect();
        let d = decay_rate(&geo, 50).unwrap();
        assert_relative_eq!(d.rate, 0.9125_f64.ln(), epsilon = 1e-12);
        assert_eq!(d.excluded, 0);
        // Zeros are excluded and counted.
        let with_zero = vec![1.0, 0.0, 0.5, 0.25];
        let d = decay_rate(&with_zero, 4).unwrap();
        assert_eq!(d.excluded, 2);
        assert_relative_eq!(d.rate, 0.5_f64.ln(), epsilon = 1e-12);
        assert!(decay_rate(&[1.0], 1).is_err());
        assert!(decay_rate(&[0.0, 0.0, 0.0], 3).is_err());
        assert!(decay_rate(&[1.0, 1.0], 5).is_err());
    }

    fn synthetic_log(v: Vec<f64>) -> TrajectoryLog {
        let records: Vec<StepRecord> = v
            .iter()
            .enumerate()
            .map(|(k, &v)| StepRecord {
                k,
                eta: 0.1,
                lambda_star: 0.0,
                d_norm: 1.0,
                v,
                cos_phi: Some(0.5),
                conflict: k % 2 == 0,
                j_team: -v,
                regime: Regime::Inactive,
            })
            .collect();
        let final_v = v.last().copied().unwrap() * 0.9125;
        TrajectoryLog {
            records,
            final_theta: vec![0.0],
            final_v,
            final_j_team: 0.0,
            smoothness: None,
            field_evals: v.len() as u64 + 1,
        }
    }

    #[test]
    fn conflict_rate_counts_the_tail() {
        let log = synthetic_log((0..10).map(|k| 0.9_f64.powi(k)).collect());
        // Even k conflicts: the last 4 records are k = 6..9 -> 2 of 4.
        assert_abs_diff_eq!(conflict_rate(&log, 4).unwrap(), 0.5, epsilon = 1e-15);
        assert!(conflict_rate(&log, 0).is_err());
        assert!(conflict_rate(&log, 11).is_err());
    }

    #[test]
    fn summarize_matches_the_geometric_closed_form() {
        let n = 200;
        let v: Vec<f64> = (0..n).map(|k| 0.9125_f64.powi(k)).collect();
        let log = synthetic_log(v);
        let summary = summarize(&log, &SummaryThresholds::default());
        // 0.9125^k < 1e-6 first at k = 151.
        assert_eq!(summary.convergence_step, Some(151));
        assert_relative_eq!(summary.gap_decay_rate.unwrap(), 0.9125_f64.ln(), epsilon = 1e-12);
        assert_eq!(summary.mean_alignment, Some(0.5));
        assert!(summary.steady_state_v < 1e-6);
        // Window is 10% of 200 = 20 records; even-k conflicts make half.
        assert_abs_diff_eq!(summary.gcr, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn summarize_handles_an_all_zero_gap() {
        let mut log = synthetic_log(vec![0.0; 12]);
        for r in &mut log.records {
            r.cos_phi = None;
        }
        log.final_v = 0.0;
        let summary = summarize(&log, &SummaryThresholds::default());
        assert_eq!(summary.convergence_step, Some(0));
        assert_eq!(summary.mean_alignment, None);
        assert_eq!(summary.gap_decay_rate, None);
        assert_eq!(summary.steady_state_v, 0.0);
    }

    #[test]
    fn window_clipping() {
        let t = SummaryThresholds::default();
        assert_eq!(summary_window(200, &t), 20);
        assert_eq!(summary_window(50, &t), 10);
        assert_eq!(summary_window(4, &t), 4);
    }
}
