//! Policy-gradient estimates per trajectory and the empirical risk of a
//! reward hypothesis on a demonstration.
//!
//! The estimator is the likelihood-ratio (REINFORCE) form: the sum over
//! timesteps of the policy score times the discounted reward-to-go. Time is
//! indexed `t = 0..T-1` over `(s_t, a_t)` pairs. For linear weighted-sum
//! rewards the estimate is exactly linear in the raw weight vector, which
//! [`RiskModel`] exploits by precomputing one gain-shaped linear map per
//! trajectory.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{HypothesisClass, RewardParams};
use crate::mdp::{log_policy_gradient, Demonstration, GaussianLinearPolicy, Trajectory};

/// Loss applied to a gradient estimate. Only the Euclidean norm is
/// supported; its Lipschitz constant is recorded so penalty formulas read it
/// instead of hard-coding 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    kind: LossKind,
    lipschitz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    EuclideanNorm,
}

impl LossSpec {
    /// The 2-norm loss: `l(0) = 0`, Lipschitz with constant 1.
    pub fn euclidean() -> Self {
        Self {
            kind: LossKind::EuclideanNorm,
            lipschitz: 1.0,
        }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

impl Default for LossSpec {
    fn default() -> Self {
        Self::euclidean()
    }
}

/// A gain-shaped policy-gradient estimate for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    value: DMatrix<f64>,
}

impl GradientEstimate {
    pub fn value(&self) -> &DMatrix<f64> {
        &self.value
    }
}

/// Score norms of a demonstration under a policy: the `M x T` table of
/// `||grad_K ln pi(a_t^i; s_t^i)||` and its per-timestep maxima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreProfile {
    per_t_max: Vec<f64>,
    per_t_all: Vec<Vec<f64>>,
}

impl ScoreProfile {
    /// Maximum score norm over trajectories at each timestep.
    pub fn per_t_max(&self) -> &[f64] {
        &self.per_t_max
    }

    /// `per_t_all[i][t]` is trajectory `i`'s score norm at timestep `t`.
    pub fn per_t_all(&self) -> &[Vec<f64>] {
        &self.per_t_all
    }

    pub fn horizon(&self) -> usize {
        self.per_t_max.len()
    }
}

/// Discounted reward-to-go by backward recursion; same value as the
/// quadratic-time double sum.
fn reward_to_go(rewards: &[f64], discount: f64) -> Vec<f64> {
    let mut togo = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + discount * acc;
        togo[t] = acc;
    }
    togo
}

/// REINFORCE estimate of the objective gradient for one trajectory with raw
/// (not necessarily simplex) weights: exactly linear in `omega`.
pub fn estimate_gradient_raw(
    trajectory: &Trajectory,
    policy: &GaussianLinearPolicy,
    class: &HypothesisClass,
    omega: &DVector<f64>,
    discount: f64,
) -> Result<GradientEstimate> {
    let rewards: Vec<f64> = trajectory
        .states()
        .iter()
        .zip(trajectory.actions())
        .map(|(s, a)| class.linear_reward(omega, s, a))
        .collect::<Result<_>>()?;
    let togo = reward_to_go(&rewards, discount);
    let mut value = DMatrix::zeros(policy.action_dim(), policy.state_dim());
    for t in 0..trajectory.len() {
        let score = log_policy_gradient(policy, &trajectory.states()[t], &trajectory.actions()[t]);
        value += score * togo[t];
    }
    Ok(GradientEstimate { value })
}

/// REINFORCE estimate under simplex-constrained reward parameters.
pub fn estimate_gradient(
    trajectory: &Trajectory,
    policy: &GaussianLinearPolicy,
    class: &HypothesisClass,
    params: &RewardParams,
    discount: f64,
) -> Result<GradientEstimate> {
    if params.class_index() != class.index() {
        return Err(Error::ClassMismatch {
            class: class.index(),
            params: params.class_index(),
        });
    }
    estimate_gradient_raw(trajectory, policy, class, params.omega(), discount)
}

/// Loss of a gradient estimate: the Euclidean (Frobenius) norm of the
/// flattened matrix.
pub fn loss(estimate: &GradientEstimate, _spec: &LossSpec) -> f64 {
    estimate.value.norm()
}

/// Empirical risk: the mean loss of per-trajectory gradient estimates, in
/// trajectory order (fixed summation order).
pub fn empirical_risk(
    demo: &Demonstration,
    policy: &GaussianLinearPolicy,
    class: &HypothesisClass,
    params: &RewardParams,
    spec: &LossSpec,
    discount: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for trajectory in demo.trajectories() {
        let estimate = estimate_gradient(trajectory, policy, class, params, discount)?;
        total += loss(&estimate, spec);
    }
    Ok(total / demo.len() as f64)
}

/// Score-norm table of a demonstration under the policy used for risk
/// evaluation (the MLE gain in the IRL pipeline).
pub fn score_profile(demo: &Demonstration, policy: &GaussianLinearPolicy) -> ScoreProfile {
    let horizon = demo.horizon();
    let per_t_all: Vec<Vec<f64>> = demo
        .trajectories()
        .iter()
        .map(|traj| {
            (0..horizon)
                .map(|t| {
                    log_policy_gradient(policy, &traj.states()[t], &traj.actions()[t]).norm()
                })
                .collect()
        })
        .collect();
    let per_t_max = (0..horizon)
        .map(|t| {
            per_t_all
                .iter()
                .map(|row| row[t])
                .fold(0.0f64, f64::max)
        })
        .collect();
    ScoreProfile {
        per_t_max,
        per_t_all,
    }
}

/// Precomputed per-trajectory linear maps from raw weights to flattened
/// gradient estimates.
///
/// Because the estimator is linear in the weights, each trajectory
/// contributes a fixed `(gain size) x total_dim` matrix; the stacked form
/// makes one risk evaluation two matrix-vector products.
#[derive(Debug, Clone)]
pub struct RiskModel {
    stacked: DMatrix<f64>,
    trajectories: usize,
    gain_rows: usize,
    gain_cols: usize,
    sign: f64,
}

impl RiskModel {
    pub fn build(
        demo: &Demonstration,
        policy: &GaussianLinearPolicy,
        class: &HypothesisClass,
        discount: f64,
    ) -> Result<Self> {
        let dim = class.total_dim();
        let gain_rows = policy.action_dim();
        let gain_cols = policy.state_dim();
        let gain_size = gain_rows * gain_cols;
        let horizon = demo.horizon();
        let mut stacked = DMatrix::zeros(demo.len() * gain_size, dim);
        for (i, traj) in demo.trajectories().iter().enumerate() {
            // Feature reward-to-go, coordinate by coordinate, backward.
            let mut togo: Vec<DVector<f64>> = vec![DVector::zeros(dim); horizon];
            let mut acc = DVector::zeros(dim);
            for t in (0..horizon).rev() {
                let phi = class.eval_features(&traj.states()[t], &traj.actions()[t])?;
                acc = phi + discount * acc;
                togo[t] = acc.clone();
            }
            let mut block = stacked.view_mut((i * gain_size, 0), (gain_size, dim));
            for t in 0..horizon {
                let score =
                    log_policy_gradient(policy, &traj.states()[t], &traj.actions()[t]);
                // Column-major flattening of the score matrix.
                for (r, &sc) in score.as_slice().iter().enumerate() {
                    if sc != 0.0 {
                        for c in 0..dim {
                            block[(r, c)] += sc * togo[t][c];
                        }
                    }
                }
            }
        }
        Ok(Self {
            stacked,
            trajectories: demo.len(),
            gain_rows,
            gain_cols,
            sign: class.sign(),
        })
    }

    pub fn len(&self) -> usize {
        self.trajectories
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories == 0
    }

    pub fn dim(&self) -> usize {
        self.stacked.ncols()
    }

    fn gain_size(&self) -> usize {
        self.gain_rows * self.gain_cols
    }

    /// Empirical risk at raw weights.
    pub fn risk(&self, omega: &DVector<f64>) -> f64 {
        let y = &self.stacked * omega;
        let g = self.gain_size();
        let mut total = 0.0;
        for i in 0..self.trajectories {
            total += y.rows(i * g, g).norm();
        }
        total / self.trajectories as f64
    }

    /// Empirical risk and one subgradient at raw weights. At the norm's
    /// kink (a zero gradient estimate) the zero subgradient is used.
    pub fn risk_and_subgrad(&self, omega: &DVector<f64>) -> (f64, DVector<f64>) {
        let mut y = &self.stacked * omega;
        let g = self.gain_size();
        let m = self.trajectories as f64;
        let mut total = 0.0;
        for i in 0..self.trajectories {
            let mut rows = y.rows_mut(i * g, g);
            let norm = rows.norm();
            total += norm;
            if norm > 0.0 {
                rows /= norm * m;
            } else {
                rows.fill(0.0);
            }
        }
        let grad = self.stacked.transpose() * y;
        (total / m, grad)
    }

    /// The gradient estimate of one trajectory at raw weights, reshaped to
    /// the gain's shape (includes the class's cost sign).
    pub fn gradient_estimate(&self, trajectory: usize, omega: &DVector<f64>) -> GradientEstimate {
        let g = self.gain_size();
        let flat = self.stacked.rows(trajectory * g, g) * omega * self.sign;
        GradientEstimate {
            value: DMatrix::from_column_slice(self.gain_rows, self.gain_cols, flat.as_slice()),
        }
    }
}
