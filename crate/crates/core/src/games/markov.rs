//! Tabular cooperative Markov games with exact policy evaluation.
//!
//! Agents hold softmax tabular policies (one `|S| x |A_i|` logit table per
//! agent, flattened state-major into their parameter block). All quantities
//! are computed exactly by linear solves, never by sampling:
//!
//! * values: `(I - gamma P^pi) v = r^pi`, action values
//!   `Q(s,a) = R(s,a) + gamma sum_s' P(s'|s,a) v(s')`
//! * discounted occupancy: `(I - gamma P^pi^T) rho = mu`, i.e.
//!   `rho(s) = sum_t gamma^t Pr(s_t = s)`. The occupancy is deliberately
//!   unnormalized (total mass `1/(1-gamma)`): that convention makes the
//!   analytic policy gradient equal the finite-difference gradient of
//!   `J = sum_s mu(s) v(s)`, and it is used identically for the independent
//!   and team fields so any convention factor would cancel in their
//!   difference anyway.
//!
//! The team field is the exact policy gradient. The independent field is the
//! same actor formula driven by a frozen action-value table (a
//! [`CriticSnapshot`]): partner policies and occupancy stay live, only the
//! critic lags. With a fresh snapshot the two fields coincide; between
//! refreshes their gap is the exact analog of actor-critic staleness.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use nalgebra::{DMatrix, DVector};

use crate::game::{Game, GameError};
use crate::layout::{AgentLayout, JointParams};

/// Caps keep finite-difference sweeps over the joint table affordable.
pub const MAX_STATES: usize = 16;
pub const MAX_ACTIONS: usize = 4;
pub const MAX_AGENTS: usize = 3;

#[derive(Debug, Error)]
pub enum MarkovError {
    #[error("{0}")]
    Shape(String),
    #[error("size cap exceeded: {0}")]
    Cap(String),
    #[error("transition row (s={state}, a={action}) sums to {sum}, expected 1")]
    RowSum { state: usize, action: usize, sum: f64 },
    #[error("negative probability {value} in {what}")]
    NegativeProbability { what: &'static str, value: f64 },
    #[error("gamma must lie in [0, 1), got {0}")]
    Gamma(f64),
    #[error("initial distribution sums to {0}, expected 1")]
    MuSum(f64),
}

/// Plain serializable description of a tabular Markov game.
/// `transitions[s][a][s']` and `rewards[s][a]` index joint actions
/// lexicographically, agent 0 most significant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkovSpec {
    pub n_states: usize,
    pub n_actions: Vec<usize>,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<f64>>,
    pub gamma: f64,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TabularMarkovGame {
    spec: MarkovSpec,
    layout: AgentLayout,
    /// Joint action index -> per-agent action tuple.
    joint: Vec<Vec<usize>>,
}

impl TabularMarkovGame {
    pub fn new(spec: MarkovSpec) -> Result<Self, MarkovError> {
        let s_n = spec.n_states;
        let n = spec.n_actions.len();
        if s_n == 0 || n == 0 {
            return Err(MarkovError::Shape("need at least one state and one agent".into()));
        }
        if s_n > MAX_STATES {
            return Err(MarkovError::Cap(format!("{s_n} states > {MAX_STATES}")));
        }
        if n > MAX_AGENTS {
            return Err(MarkovError::Cap(format!("{n} agents > {MAX_AGENTS}")));
        }
        for (i, &a) in spec.n_actions.iter().enumerate() {
            if a == 0 {
                return Err(MarkovError::Shape(format!("agent {i} has no actions")));
            }
            if a > MAX_ACTIONS {
                return Err(MarkovError::Cap(format!("agent {i}: {a} actions > {MAX_ACTIONS}")));
            }
        }
        let aj: usize = spec.n_actions.iter().product();
        if spec.transitions.len() != s_n || spec.rewards.len() != s_n {
            return Err(MarkovError::Shape(format!(
                "transitions/rewards must have {s_n} state entries, got {}/{}",
                spec.transitions.len(),
                spec.rewards.len()
            )));
        }
        for s in 0..s_n {
            if spec.transitions[s].len() != aj || spec.rewards[s].len() != aj {
                return Err(MarkovError::Shape(format!(
                    "state {s}: expected {aj} joint-action entries, got {}/{}",
                    spec.transitions[s].len(),
                    spec.rewards[s].len()
                )));
            }
            for a in 0..aj {
                let row = &spec.transitions[s][a];
                if row.len() != s_n {
                    return Err(MarkovError::Shape(format!(
                        "transition row (s={s}, a={a}) has {} entries, expected {s_n}",
                        row.len()
                    )));
                }
                for &p in row {
                    if p < 0.0 {
                        return Err(MarkovError::NegativeProbability { what: "transitions", value: p });
                    }
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(MarkovError::RowSum { state: s, action: a, sum });
                }
            }
        }
        if !(0.0..1.0).contains(&spec.gamma) {
            return Err(MarkovError::Gamma(spec.gamma));
        }
        if spec.mu.len() != s_n {
            return Err(MarkovError::Shape(format!("mu has {} entries, expected {s_n}", spec.mu.len())));
        }
        for &p in &spec.mu {
            if p < 0.0 {
                return Err(MarkovError::NegativeProbability { what: "mu", value: p });
            }
        }
        let mu_sum: f64 = spec.mu.iter().sum();
        if (mu_sum - 1.0).abs() > 1e-12 {
            return Err(MarkovError::MuSum(mu_sum));
        }

        let layout = AgentLayout::new(spec.n_actions.iter().map(|&a| s_n * a).collect())
            .expect("validated dims");
        let mut joint = Vec::with_capacity(aj);
        for idx in 0..aj {
            let mut rem = idx;
            let mut tuple = vec![0usize; n];
            for i in (0..n).rev() {
                tuple[i] = rem % spec.n_actions[i];
                rem /= spec.n_actions[i];
            }
            joint.push(tuple);
        }
        Ok(Self { spec, layout, joint })
    }

    #[must_use]
    pub fn spec(&self) -> &MarkovSpec {
        &self.spec
    }

    #[must_use]
    pub fn n_states(&self) -> usize {
        self.spec.n_states
    }

    #[must_use]
    pub fn n_agents(&self) -> usize {
        self.spec.n_actions.len()
    }

    /// Per-agent softmax policies: `policies[i][s][a]`, rows sum to 1.
    pub fn policies(&self, theta: &JointParams) -> Vec<Vec<Vec<f64>>> {
        let s_n = self.spec.n_states;
        (0..self.n_agents())
            .map(|i| {
                let block = theta.block(i);
                let a_n = self.spec.n_actions[i];
                (0..s_n)
                    .map(|s| {
                        let logits = &block[s * a_n..(s + 1) * a_n];
                        let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                        let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
                        let z: f64 = exps.iter().sum();
                        exps.iter().map(|&e| e / z).collect()
                    })
                    .collect()
            })
            .collect()
    }

    fn joint_policy(&self, policies: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
        let s_n = self.spec.n_states;
        (0..s_n)
            .map(|s| {
                self.joint
                    .iter()
                    .map(|tuple| {
                        tuple
                            .iter()
                            .enumerate()
                            .map(|(i, &a)| policies[i][s][a])
                            .product()
                    })
                    .collect()
            })
            .collect()
    }

    fn state_kernel(&self, joint_pi: &[Vec<f64>]) -> (DMatrix<f64>, DVector<f64>) {
        let s_n = self.spec.n_states;
        let mut p_pi = DMatrix::zeros(s_n, s_n);
        let mut r_pi = DVector::zeros(s_n);
        for s in 0..s_n {
            for (a, &w) in joint_pi[s].iter().enumerate() {
                r_pi[s] += w * self.spec.rewards[s][a];
                for s2 in 0..s_n {
                    p_pi[(s, s2)] += w * self.spec.transitions[s][a][s2];
                }
            }
        }
        (p_pi, r_pi)
    }

    /// Discounted state occupancy `rho(s) = sum_t gamma^t Pr(s_t = s)`
    /// (unnormalized; see the module doc).
    pub fn occupancy(&self, theta: &JointParams) -> Result<Vec<f64>, GameError> {
        let policies = self.policies(theta);
        let joint_pi = self.joint_policy(&policies);
        let (p_pi, _) = self.state_kernel(&joint_pi);
        let s_n = self.spec.n_states;
        let lhs = DMatrix::identity(s_n, s_n) - self.spec.gamma * p_pi.transpose();
        let mu = DVector::from_column_slice(&self.spec.mu);
        let rho = lhs
            .lu()
            .solve(&mu)
            .ok_or_else(|| GameError::Numerical("occupancy system is singular".into()))?;
        Ok(rho.as_slice().to_vec())
    }

    /// Actor-gradient assembly shared by the exact and stale paths: block `i`
    /// entry `(s, b)` is `rho(s) pi_i(b|s) (qbar_i(s,b) - vbar_i(s))` where
    /// `qbar_i` marginalizes the given action-value table over the live
    /// partner policies. With the live `Q^pi` table this is the exact policy
    /// gradient; with a frozen table it is the stale independent field.
    fn actor_field(&self, theta: &JointParams, q_table: &[Vec<f64>]) -> Result<Vec<f64>, GameError> {
        let policies = self.policies(theta);
        let rho = self.occupancy(theta)?;
        let s_n = self.spec.n_states;
        let mut out = Vec::with_capacity(theta.dim());
        for i in 0..self.n_agents() {
            let a_n = self.spec.n_actions[i];
            for s in 0..s_n {
                let mut qbar = vec![0.0; a_n];
                for (a, tuple) in self.joint.iter().enumerate() {
                    let mut w = 1.0;
                    for (j, &aj) in tuple.iter().enumerate() {
                        if j != i {
                            w *= policies[j][s][aj];
                        }
                    }
                    qbar[tuple[i]] += w * q_table[s][a];
                }
                let vbar: f64 = (0..a_n).map(|a| policies[i][s][a] * qbar[a]).sum();
                for b in 0..a_n {
                    out.push(rho[s] * policies[i][s][b] * (qbar[b] - vbar));
                }
            }
        }
        Ok(out)
    }
}

/// Exact values under the joint policy at `theta`.
#[derive(Debug, Clone)]
pub struct PolicyEvalResult {
    /// State values `v(s)`.
    pub v: Vec<f64>,
    /// Action values `q[s][joint_action]`.
    pub q: Vec<Vec<f64>>,
}

/// Solves `(I - gamma P^pi) v = r^pi` exactly, then backs out action values.
pub fn policy_eval(game: &TabularMarkovGame, theta: &JointParams) -> Result<PolicyEvalResult, GameError> {
    let policies = game.policies(theta);
    let joint_pi = game.joint_policy(&policies);
    let (p_pi, r_pi) = game.state_kernel(&joint_pi);
    let s_n = game.spec.n_states;
    let lhs = DMatrix::identity(s_n, s_n) - game.spec.gamma * &p_pi;
    let v = lhs
        .lu()
        .solve(&r_pi)
        .ok_or_else(|| GameError::Numerical("policy evaluation system is singular".into()))?;
    let q = (0..s_n)
        .map(|s| {
            (0..game.joint.len())
                .map(|a| {
                    let cont: f64 = (0..s_n)
                        .map(|s2| game.spec.transitions[s][a][s2] * v[s2])
                        .sum();
                    game.spec.rewards[s][a] + game.spec.gamma * cont
                })
                .collect()
        })
        .collect();
    Ok(PolicyEvalResult { v: v.as_slice().to_vec(), q })
}

/// Exact policy gradient of `J = sum_s mu(s) v(s)` via the policy gradient
/// theorem with exact occupancy and action values.
pub fn exact_policy_gradient(game: &TabularMarkovGame, theta: &JointParams) -> Result<Vec<f64>, GameError> {
    let eval = policy_eval(game, theta)?;
    game.actor_field(theta, &eval.q)
}

/// Frozen action-value table taken at a refresh point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticSnapshot {
    pub q_table: Vec<Vec<f64>>,
    /// Step index at which the snapshot was taken.
    pub taken_at: usize,
}

impl CriticSnapshot {
    /// Evaluates the exact action values at `theta` and freezes them.
    pub fn refresh(game: &TabularMarkovGame, theta: &JointParams, step: usize) -> Result<Self, GameError> {
        let eval = policy_eval(game, theta)?;
        Ok(Self { q_table: eval.q, taken_at: step })
    }
}

/// Independent field under a stale critic: the actor formula with live
/// occupancy and partner policies but the frozen value table.
pub fn stale_critic_field(
    game: &TabularMarkovGame,
    theta: &JointParams,
    snapshot: &CriticSnapshot,
) -> Result<Vec<f64>, GameError> {
    game.actor_field(theta, &snapshot.q_table)
}

/// The fresh-critic game: both fields equal the exact policy gradient, all
/// agents share the team payoff.
impl Game for TabularMarkovGame {
    fn layout(&self) -> &AgentLayout {
        &self.layout
    }

    fn agent_payoff(&self, _agent: usize, theta: &JointParams) -> Result<f64, GameError> {
        self.team_payoff(theta)
    }

    fn team_payoff(&self, theta: &JointParams) -> Result<f64, GameError> {
        let eval = policy_eval(self, theta)?;
        Ok(self.spec.mu.iter().zip(&eval.v).map(|(m, v)| m * v).sum())
    }

    fn independent_field(&self, theta: &JointParams) -> Result<Vec<f64>, GameError> {
        exact_policy_gradient(self, theta)
    }

    fn team_field(&self, theta: &JointParams) -> Result<Vec<f64>, GameError> {
        exact_policy_gradient(self, theta)
    }
}

/// A Markov game seen through a stale critic: the runtime object the
/// optimizer steps on between refreshes. The snapshot is an explicit value,
/// never shared mutable state.
#[derive(Debug, Clone, Copy)]
pub struct StaleCriticView<'a> {
    pub game: &'a TabularMarkovGame,
    pub snapshot: &'a CriticSnapshot,
}

impl Game for StaleCriticView<'_> {
    fn layout(&self) -> &AgentLayout {
        self.game.layout()
    }

    fn agent_payoff(&self, agent: usize, theta: &JointParams) -> Result<f64, GameError> {
        self.game.agent_payoff(agent, theta)
    }

    fn team_payoff(&self, theta: &JointParams) -> Result<f64, GameError> {
        self.game.team_payoff(theta)
    }

    fn independent_field(&self, theta: &JointParams) -> Result<Vec<f64>, GameError> {
        stale_critic_field(self.game, theta, self.snapshot)
    }

    fn team_field(&self, theta: &JointParams) -> Result<Vec<f64>, GameError> {
        exact_policy_gradient(self.game, theta)
    }
}

/// Bundled two-state, two-agent fixture.
///
/// State 0 is a coordination dilemma (joint action (1,1) pays 5, (0,0) pays
/// a safe 1); state 1 rewards coordinated switching. Transitions depend on
/// agreement, `gamma = 0.97` makes continuation values dominate, and reward
/// scale 5 makes a 10-step-old critic genuinely misleading.
///
/// The game is symmetric under swapping the two agents, so the agent-swap
/// manifold (both agents holding identical logits) is invariant for every
/// update rule here. Started on that manifold with a stale critic (period
/// around 10) and a constant step, plain independent ascent sustains a
/// miscoordination oscillation instead of converging — the lagged critic
/// keeps both agents chasing the same stale target in lockstep. Generic
/// (asymmetric) starts let the agents break the tie and drift to a
/// coordinated corner where the oscillation dies out.
#[must_use]
pub fn two_state() -> TabularMarkovGame {
    TabularMarkovGame::new(MarkovSpec {
        n_states: 2,
        n_actions: vec![2, 2],
        // joint order: (0,0), (0,1), (1,0), (1,1)
        transitions: vec![
            vec![
                vec![0.8, 0.2],
                vec![0.5, 0.5],
                vec![0.5, 0.5],
                vec![0.1, 0.9],
            ],
            vec![
                vec![0.6, 0.4],
                vec![0.9, 0.1],
                vec![0.9, 0.1],
                vec![0.3, 0.7],
            ],
        ],
        rewards: vec![vec![1.0, 0.0, 0.0, 5.0], vec![0.0, 4.0, 4.0, 0.5]],
        gamma: 0.97,
        mu: vec![0.5, 0.5],
    })
    .expect("fixture is well-formed")
}

/// Single-state, single-agent, two-action bandit with rewards (1, 0) and
/// `gamma = 0`: at uniform logits the exact gradient is `(0.25, -0.25)`.
#[must_use]
pub fn single_state_bandit() -> TabularMarkovGame {
    TabularMarkovGame::new(MarkovSpec {
        n_states: 1,
        n_actions: vec![2],
        transitions: vec![vec![vec![1.0], vec![1.0]]],
        rewards: vec![vec![1.0, 0.0]],
        gamma: 0.0,
        mu: vec![1.0],
    })
    .expect("fixture is well-formed")
}
