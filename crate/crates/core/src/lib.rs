//! Multi-agent differentiable games with a certified stability mechanism.
//!
//! The library models cooperative games through two vector fields over the
//! joint parameters: the independent field `u_ind` (each agent climbing its
//! own payoff) and the team field `u_team` (the gradient of the shared
//! objective). Their disagreement defines the rationality gap
//! `V = 0.5 * ||u_ind - u_team||^2`, a Lyapunov candidate for the learning
//! dynamics. The projection module computes the closed-form half-space
//! projection of `u_ind` that enforces `<grad V, d> <= -sigma V`, and the
//! optimizer module runs the resulting update schemes against baselines on
//! analytically tractable games.

pub mod game;
pub mod games;
pub mod layout;
pub mod lyapunov;
pub mod metrics;
pub mod optim;
pub mod projection;

pub use game::{fd_gradient, field_decomposition, FieldSample, Game, GameError};
pub use layout::{AgentLayout, JointParams, LayoutError};
pub use lyapunov::{
    rationality_gap, smoothness_estimate, stability_normal_analytic, stability_normal_fd,
    SmoothnessEstimate, SmoothnessMethod,
};
pub use metrics::{
    alignment, block_conflict, conflict_rate, decay_rate, descent_certificate_check, summarize,
    DecayEstimate, MechanismSummary, MetricsError, SummaryThresholds,
};
pub use optim::{
    align_rectify, eta_adaptive, eta_adaptive_clamped, eta_schedule_rm, pcgrad_surgery,
    run_trajectory, step_baseline,
    step_halypo, HMode, OptimError, OptimizerConfig, RunFailure, RunGame, Schedule, StepRecord,
    StepState, TrajectoryLog, Variant,
};
pub use projection::{
    halfspace_oracle, halypo_project, kkt_residuals, KktResiduals, ProjectionError,
    ProjectionResult, Regime,
};
