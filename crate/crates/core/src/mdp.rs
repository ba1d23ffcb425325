//! Deterministic linear dynamics, Gaussian linear policies, trajectory
//! rollout, and demonstration sampling.
//!
//! The MDP here is the discrete-time plant `s_{t+1} = A s_t + B a_t` with a
//! finite horizon and a discount factor. Policies are linear state feedback
//! plus isotropic Gaussian exploration noise, `a = K s + eta`, which keeps
//! the policy stochastic and differentiable in the gain `K`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seeding::stream_rng;

/// Deterministic linear plant with horizon and discount.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrSystem {
    state_dim: usize,
    action_dim: usize,
    dynamics_a: DMatrix<f64>,
    dynamics_b: DMatrix<f64>,
    horizon: usize,
    discount: f64,
}

impl LqrSystem {
    /// Builds a system, rejecting uncontrollable `(A, B)` pairs and
    /// discounts outside `[0, 1)`.
    pub fn new(
        dynamics_a: DMatrix<f64>,
        dynamics_b: DMatrix<f64>,
        horizon: usize,
        discount: f64,
    ) -> Result<Self> {
        let state_dim = dynamics_a.nrows();
        if dynamics_a.ncols() != state_dim {
            return Err(Error::DimensionMismatch {
                context: "dynamics matrix A must be square",
                expected: state_dim,
                actual: dynamics_a.ncols(),
            });
        }
        if dynamics_b.nrows() != state_dim {
            return Err(Error::DimensionMismatch {
                context: "dynamics matrix B rows",
                expected: state_dim,
                actual: dynamics_b.nrows(),
            });
        }
        let action_dim = dynamics_b.ncols();
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::InvalidArgument(
                "state and action dimensions must be positive".into(),
            ));
        }
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidDiscount(discount));
        }
        let rank = controllability_rank(&dynamics_a, &dynamics_b);
        if rank < state_dim {
            return Err(Error::NotControllable { rank, state_dim });
        }
        Ok(Self {
            state_dim,
            action_dim,
            dynamics_a,
            dynamics_b,
            horizon,
            discount,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn dynamics_a(&self) -> &DMatrix<f64> {
        &self.dynamics_a
    }

    pub fn dynamics_b(&self) -> &DMatrix<f64> {
        &self.dynamics_b
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }
}

/// Rank of `[B, AB, ..., A^{n-1}B]` with a relative singular-value cutoff.
fn controllability_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let m = b.ncols();
    let mut ctrb = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for i in 0..n {
        ctrb.view_mut((0, i * m), (n, m)).copy_from(&block);
        block = a * &block;
    }
    let svd = ctrb.svd(false, false);
    let max_sv = svd.singular_values.max();
    if max_sv <= 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * max_sv)
        .count()
}

/// Linear state-feedback policy with isotropic Gaussian exploration:
/// `a = K s + eta`, `eta ~ N(0, noise_std^2 I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLinearPolicy {
    gain: DMatrix<f64>,
    noise_std: f64,
}

impl GaussianLinearPolicy {
    pub fn new(gain: DMatrix<f64>, noise_std: f64) -> Result<Self> {
        if !(noise_std > 0.0 && noise_std.is_finite()) {
            return Err(Error::InvalidNoiseStd(noise_std));
        }
        Ok(Self { gain, noise_std })
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn action_dim(&self) -> usize {
        self.gain.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.gain.ncols()
    }
}

/// One rollout: `horizon + 1` states and `horizon` actions with
/// `s_{t+1} = A s_t + B a_t` holding exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<DVector<f64>>,
    actions: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(states: Vec<DVector<f64>>, actions: Vec<DVector<f64>>) -> Result<Self> {
        if states.len() != actions.len() + 1 || actions.is_empty() {
            return Err(Error::MalformedTrajectory {
                states: states.len(),
                actions: actions.len(),
            });
        }
        Ok(Self { states, actions })
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn actions(&self) -> &[DVector<f64>] {
        &self.actions
    }

    /// Number of `(s_t, a_t)` pairs.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Maximum replay deviation `max_t ||s_{t+1} - A s_t - B a_t||`.
    /// Rollouts produce exactly zero because the replay uses the same
    /// floating-point expression as [`step`].
    pub fn replay_deviation(&self, system: &LqrSystem) -> Result<f64> {
        let mut worst = 0.0f64;
        for t in 0..self.len() {
            let predicted = step(system, &self.states[t], &self.actions[t])?;
            worst = worst.max((&self.states[t + 1] - predicted).norm());
        }
        Ok(worst)
    }
}

/// A set of expert trajectories with their initial states and the seed that
/// generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    trajectories: Vec<Trajectory>,
    initial_states: Vec<DVector<f64>>,
    seed: u64,
}

impl Demonstration {
    pub fn new(trajectories: Vec<Trajectory>, seed: u64) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::EmptyDemonstration);
        }
        let initial_states = trajectories
            .iter()
            .map(|t| t.states()[0].clone())
            .collect();
        Ok(Self {
            trajectories,
            initial_states,
            seed,
        })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn initial_states(&self) -> &[DVector<f64>] {
        &self.initial_states
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of trajectories `M`.
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Number of `(s_t, a_t)` pairs per trajectory.
    pub fn horizon(&self) -> usize {
        self.trajectories[0].len()
    }
}

/// Initial-state law for demonstrations.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDistribution {
    /// Componentwise uniform on `[lower_i, upper_i]`.
    UniformBox {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
}

impl InitialDistribution {
    pub fn uniform_box(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidBox);
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidBox);
        }
        Ok(Self::UniformBox { lower, upper })
    }

    /// Symmetric box `[-1, 1]^dim`, the default excitation.
    pub fn symmetric_unit_box(dim: usize) -> Self {
        Self::UniformBox {
            lower: DVector::from_element(dim, -1.0),
            upper: DVector::from_element(dim, 1.0),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::UniformBox { lower, .. } => lower.len(),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            Self::UniformBox { lower, upper } => DVector::from_fn(lower.len(), |i, _| {
                lower[i] + (upper[i] - lower[i]) * rng.random::<f64>()
            }),
        }
    }
}

/// One deterministic transition `A s + B a`.
pub fn step(system: &LqrSystem, state: &DVector<f64>, action: &DVector<f64>) -> Result<DVector<f64>> {
    if state.len() != system.state_dim {
        return Err(Error::DimensionMismatch {
            context: "step state",
            expected: system.state_dim,
            actual: state.len(),
        });
    }
    if action.len() != system.action_dim {
        return Err(Error::DimensionMismatch {
            context: "step action",
            expected: system.action_dim,
            actual: action.len(),
        });
    }
    Ok(&system.dynamics_a * state + &system.dynamics_b * action)
}

/// Draws `K s + eta` with `eta ~ N(0, noise_std^2 I)`.
pub fn sample_action<R: Rng>(
    policy: &GaussianLinearPolicy,
    state: &DVector<f64>,
    rng: &mut R,
) -> DVector<f64> {
    assert_eq!(state.len(), policy.state_dim(), "state dimension");
    let mut action = &policy.gain * state;
    for i in 0..action.len() {
        let z: f64 = rng.sample(StandardNormal);
        action[i] += policy.noise_std * z;
    }
    action
}

/// Score of the Gaussian linear policy with respect to the gain:
/// `(a - K s) s^T / noise_std^2`, the gradient of `ln pi(a; s, K)`.
pub fn log_policy_gradient(
    policy: &GaussianLinearPolicy,
    state: &DVector<f64>,
    action: &DVector<f64>,
) -> DMatrix<f64> {
    assert_eq!(state.len(), policy.state_dim(), "state dimension");
    assert_eq!(action.len(), policy.action_dim(), "action dimension");
    let residual = action - &policy.gain * state;
    (residual / policy.noise_std.powi(2)) * state.transpose()
}

/// Rolls the policy out from `s0` for the system's full horizon.
pub fn rollout<R: Rng>(
    system: &LqrSystem,
    policy: &GaussianLinearPolicy,
    s0: &DVector<f64>,
    rng: &mut R,
) -> Trajectory {
    assert_eq!(s0.len(), system.state_dim, "initial state dimension");
    assert_eq!(policy.state_dim(), system.state_dim, "policy state dimension");
    assert_eq!(policy.action_dim(), system.action_dim, "policy action dimension");
    let mut states = Vec::with_capacity(system.horizon + 1);
    let mut actions = Vec::with_capacity(system.horizon);
    states.push(s0.clone());
    for t in 0..system.horizon {
        let action = sample_action(policy, &states[t], rng);
        let next = step(system, &states[t], &action).expect("dimensions checked above");
        actions.push(action);
        states.push(next);
    }
    Trajectory { states, actions }
}

/// Samples `m` independent rollouts from initial states drawn from `dist`.
///
/// Each trajectory uses its own generator stream derived from `seed`, so the
/// result is reproducible and trajectories could be generated in any order.
pub fn sample_demonstration(
    system: &LqrSystem,
    policy: &GaussianLinearPolicy,
    dist: &InitialDistribution,
    m: usize,
    seed: u64,
) -> Result<Demonstration> {
    if m == 0 {
        return Err(Error::EmptyDemonstration);
    }
    if dist.dim() != system.state_dim {
        return Err(Error::DimensionMismatch {
            context: "initial distribution",
            expected: system.state_dim,
            actual: dist.dim(),
        });
    }
    let trajectories = (0..m)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let s0 = dist.sample(&mut rng);
            rollout(system, policy, &s0, &mut rng)
        })
        .collect();
    Demonstration::new(trajectories, seed)
}
