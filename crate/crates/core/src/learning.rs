//! Forward policy training and gain recovery from demonstrations.
//!
//! [`train_reinforce`] creates the expert: likelihood-ratio gradient ascent
//! on the true reward with a per-timestep moving-average baseline.
//! [`estimate_gain_mle`] recovers the feedback gain from demonstrated
//! state/action pairs; for the Gaussian linear policy the maximum-likelihood
//! problem is least squares and does not depend on the noise level.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{
    log_policy_gradient, rollout, Demonstration, GaussianLinearPolicy, InitialDistribution,
    LqrSystem,
};
use crate::seeding::stream_rng;

/// REINFORCE-with-baseline training configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Trajectories rolled out per parameter update.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Number of recent batches averaged into the per-timestep baseline.
    pub baseline_window: usize,
    /// Cap on the Frobenius norm of one gain update. Likelihood-ratio
    /// gradients are heavy-tailed on weakly stable plants; one oversized
    /// step destabilizes the closed loop beyond recovery.
    pub max_step_norm: f64,
    pub seed: u64,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.batch_size == 0 || self.baseline_window == 0 {
            return Err(Error::InvalidArgument(
                "episodes, batch_size and baseline_window must be positive".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(
                "learning_rate must be non-negative and finite".into(),
            ));
        }
        if !(self.max_step_norm > 0.0) {
            return Err(Error::InvalidArgument(
                "max_step_norm must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Trained policy plus the per-episode average discounted return.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub policy: GaussianLinearPolicy,
    pub returns: Vec<f64>,
}

/// Trains the policy by REINFORCE with a per-timestep moving-average
/// baseline, maximizing the given reward from initial states drawn from
/// `dist`. Returns the trained policy and the learning curve.
pub fn train_reinforce<F>(
    system: &LqrSystem,
    true_reward: F,
    dist: &InitialDistribution,
    initial: &GaussianLinearPolicy,
    config: &TrainConfig,
) -> Result<TrainResult>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> f64,
{
    config.validate()?;
    let horizon = system.horizon();
    let discount = system.discount();
    let mut gain = initial.gain().clone();
    let noise_std = initial.noise_std();
    let mut returns = Vec::with_capacity(config.episodes);
    // Ring buffer of per-batch mean reward-to-go vectors.
    let mut baseline_history: std::collections::VecDeque<Vec<f64>> =
        std::collections::VecDeque::with_capacity(config.baseline_window);

    for episode in 0..config.episodes {
        let policy = GaussianLinearPolicy::new(gain.clone(), noise_std)?;
        let mut rng = stream_rng(config.seed, episode as u64);

        // Baseline from previous batches only.
        let mut baseline = vec![0.0; horizon];
        if !baseline_history.is_empty() {
            for past in &baseline_history {
                for t in 0..horizon {
                    baseline[t] += past[t];
                }
            }
            for b in &mut baseline {
                *b /= baseline_history.len() as f64;
            }
        }

        let mut gradient = DMatrix::zeros(gain.nrows(), gain.ncols());
        let mut batch_togo_mean = vec![0.0; horizon];
        let mut batch_return = 0.0;
        for _ in 0..config.batch_size {
            let s0 = dist.sample(&mut rng);
            let traj = rollout(system, &policy, &s0, &mut rng);
            let rewards: Vec<f64> = (0..horizon)
                .map(|t| true_reward(&traj.states()[t], &traj.actions()[t]))
                .collect();
            let mut togo = vec![0.0; horizon];
            let mut acc = 0.0;
            for t in (0..horizon).rev() {
                acc = rewards[t] + discount * acc;
                togo[t] = acc;
            }
            batch_return += togo[0];
            for t in 0..horizon {
                batch_togo_mean[t] += togo[t];
                let score = log_policy_gradient(&policy, &traj.states()[t], &traj.actions()[t]);
                gradient += score * (togo[t] - baseline[t]);
            }
        }
        let batch = config.batch_size as f64;
        gradient /= batch;
        batch_return /= batch;
        for v in &mut batch_togo_mean {
            *v /= batch;
        }

        if !batch_return.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged { episode });
        }

        returns.push(batch_return);
        let mut step = config.learning_rate * gradient;
        let step_norm = step.norm();
        if step_norm > config.max_step_norm {
            step *= config.max_step_norm / step_norm;
        }
        gain += step;
        if gain.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged { episode });
        }

        if baseline_history.len() == config.baseline_window {
            baseline_history.pop_front();
        }
        baseline_history.push_back(batch_togo_mean);
    }

    Ok(TrainResult {
        policy: GaussianLinearPolicy::new(gain, noise_std)?,
        returns,
    })
}

/// Maximum-likelihood recovery of the feedback gain from a demonstration:
/// the least-squares solution of `a_t ~ K s_t` over all pairs. Errors when
/// the state data does not excite every direction.
pub fn estimate_gain_mle(demo: &Demonstration) -> Result<DMatrix<f64>> {
    let state_dim = demo.trajectories()[0].states()[0].len();
    let action_dim = demo.trajectories()[0].actions()[0].len();
    let mut state_gram = DMatrix::zeros(state_dim, state_dim);
    let mut cross = DMatrix::zeros(action_dim, state_dim);
    let mut pairs = 0usize;
    for traj in demo.trajectories() {
        for t in 0..traj.len() {
            let s = &traj.states()[t];
            let a = &traj.actions()[t];
            state_gram += s * s.transpose();
            cross += a * s.transpose();
            pairs += 1;
        }
    }
    if pairs < state_dim {
        return Err(Error::RankDeficient {
            rank: pairs,
            required: state_dim,
        });
    }
    let eigen = state_gram.clone().symmetric_eigen();
    let max_eig = eigen.eigenvalues.max();
    let rank = if max_eig <= 0.0 {
        0
    } else {
        eigen
            .eigenvalues
            .iter()
            .filter(|&&v| v > 1e-10 * max_eig)
            .count()
    };
    if rank < state_dim {
        return Err(Error::RankDeficient {
            rank,
            required: state_dim,
        });
    }
    let lu = state_gram.lu();
    let solved = lu
        .solve(&cross.transpose())
        .ok_or(Error::RankDeficient {
            rank,
            required: state_dim,
        })?;
    Ok(solved.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{sample_demonstration, Trajectory};

    fn scalar_system() -> LqrSystem {
        LqrSystem::new(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            30,
            0.9,
        )
        .unwrap()
    }

    #[test]
    fn zero_learning_rate_leaves_gain_unchanged() {
        let sys = scalar_system();
        let initial =
            GaussianLinearPolicy::new(DMatrix::from_row_slice(1, 1, &[-0.3]), 0.1).unwrap();
        let config = TrainConfig {
            episodes: 20,
            batch_size: 4,
            learning_rate: 0.0,
            baseline_window: 5,
            max_step_norm: 0.1,
            seed: 1,
        };
        let result = train_reinforce(
            &sys,
            |s, a| -(s[0] * s[0] + a[0] * a[0]),
            &InitialDistribution::symmetric_unit_box(1),
            &initial,
            &config,
        )
        .unwrap();
        assert_eq!(result.policy.gain(), initial.gain());
        assert_eq!(result.returns.len(), 20);
    }

    /// Scalar discounted Riccati fixed point by value iteration, used as the
    /// oracle for the trained gain.
    fn scalar_riccati_gain(a: f64, b: f64, q: f64, r: f64, discount: f64) -> f64 {
        let mut p = q;
        for _ in 0..10_000 {
            let denom = r + discount * b * b * p;
            let next = q + discount * a * a * p - (discount * a * b * p).powi(2) / denom;
            if (next - p).abs() < 1e-14 {
                p = next;
                break;
            }
            p = next;
        }
        -discount * a * b * p / (r + discount * b * b * p)
    }

    #[test]
    fn reinforce_approaches_riccati_gain_on_scalar_plant() {
        let sys = scalar_system();
        let optimal = scalar_riccati_gain(1.0, 1.0, 1.0, 1.0, 0.9);
        let initial = GaussianLinearPolicy::new(DMatrix::zeros(1, 1), 0.1).unwrap();
        let config = TrainConfig {
            episodes: 300,
            batch_size: 50,
            learning_rate: 2e-3,
            baseline_window: 10,
            max_step_norm: 0.5,
            seed: 2,
        };
        let result = train_reinforce(
            &sys,
            |s, a| -(s[0] * s[0] + a[0] * a[0]),
            &InitialDistribution::symmetric_unit_box(1),
            &initial,
            &config,
        )
        .unwrap();
        let trained = result.policy.gain()[(0, 0)];
        assert!(
            (trained - optimal).abs() < 0.1,
            "trained {trained} vs optimal {optimal}"
        );
        // Training improved the average return.
        assert!(result.returns[result.returns.len() - 1] >= result.returns[0]);
    }

    #[test]
    fn divergent_training_reports_the_episode() {
        let sys = scalar_system();
        let initial = GaussianLinearPolicy::new(DMatrix::zeros(1, 1), 0.1).unwrap();
        let config = TrainConfig {
            episodes: 200,
            batch_size: 2,
            learning_rate: 1e9,
            baseline_window: 3,
            max_step_norm: f64::INFINITY,
            seed: 3,
        };
        let err = train_reinforce(
            &sys,
            |s, a| -(s[0] * s[0] + a[0] * a[0]),
            &InitialDistribution::symmetric_unit_box(1),
            &initial,
            &config,
        )
        .unwrap_err();
        assert!(matches!(err, Error::TrainingDiverged { .. }));
    }

    fn demo_from_gain(
        gain: &DMatrix<f64>,
        noise_std: f64,
        m: usize,
        horizon: usize,
        seed: u64,
    ) -> Demonstration {
        let sys = LqrSystem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
            DMatrix::identity(2, 2) * 0.1,
            horizon,
            0.9,
        )
        .unwrap();
        let policy = GaussianLinearPolicy::new(gain.clone(), noise_std).unwrap();
        let dist = InitialDistribution::symmetric_unit_box(2);
        sample_demonstration(&sys, &policy, &dist, m, seed).unwrap()
    }

    #[test]
    fn mle_recovers_noiseless_gain_exactly() {
        let gain = DMatrix::from_row_slice(2, 2, &[-0.9, -0.2, 0.1, -1.1]);
        // Noiseless synthetic data: a = K s on dynamics-consistent rollouts.
        let sys = LqrSystem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
            DMatrix::identity(2, 2) * 0.1,
            10,
            0.9,
        )
        .unwrap();
        let mut rng = stream_rng(31, 0);
        let dist = InitialDistribution::symmetric_unit_box(2);
        let trajectories: Vec<Trajectory> = (0..20)
            .map(|_| {
                let mut states = vec![dist.sample(&mut rng)];
                let mut actions = Vec::new();
                for t in 0..sys.horizon() {
                    let a = &gain * &states[t];
                    let next = crate::mdp::step(&sys, &states[t], &a).unwrap();
                    actions.push(a);
                    states.push(next);
                }
                Trajectory::new(states, actions).unwrap()
            })
            .collect();
        let demo = Demonstration::new(trajectories, 31).unwrap();
        let estimated = estimate_gain_mle(&demo).unwrap();
        assert!((estimated - gain).norm() < 1e-10);
    }

    #[test]
    fn mle_is_accurate_under_noise() {
        let gain = DMatrix::from_row_slice(2, 2, &[-1.0, -0.3, 0.2, -1.2]);
        let demo = demo_from_gain(&gain, 0.1, 1000, 50, 32);
        let estimated = estimate_gain_mle(&demo).unwrap();
        assert!(
            (&estimated - &gain).norm() < 0.05,
            "error {}",
            (&estimated - &gain).norm()
        );
    }

    #[test]
    fn mle_rejects_degenerate_excitation() {
        // A single trajectory pinned at the origin has no state excitation.
        let states = vec![DVector::zeros(2); 6];
        let actions = vec![DVector::zeros(2); 5];
        let demo = Demonstration::new(
            vec![Trajectory::new(states, actions).unwrap()],
            0,
        )
        .unwrap();
        assert!(matches!(
            estimate_gain_mle(&demo),
            Err(Error::RankDeficient { rank: 0, required: 2 })
        ));
    }

    #[test]
    fn mle_is_equivariant_under_feedback_shifts() {
        let gain = DMatrix::from_row_slice(2, 2, &[-0.8, -0.1, 0.0, -0.9]);
        let demo = demo_from_gain(&gain, 0.1, 50, 20, 33);
        let base = estimate_gain_mle(&demo).unwrap();
        let delta = DMatrix::from_row_slice(2, 2, &[0.5, -0.7, 0.2, 0.3]);
        let shifted_trajs: Vec<Trajectory> = demo
            .trajectories()
            .iter()
            .map(|traj| {
                let actions = traj
                    .states()
                    .iter()
                    .zip(traj.actions())
                    .map(|(s, a)| a + &delta * s)
                    .collect();
                Trajectory::new(traj.states().to_vec(), actions).unwrap()
            })
            .collect();
        let shifted = Demonstration::new(shifted_trajs, demo.seed()).unwrap();
        let estimate = estimate_gain_mle(&shifted).unwrap();
        assert!((estimate - (&base + &delta)).norm() < 1e-10);
    }

    #[test]
    fn mle_residuals_are_orthogonal_to_states() {
        let gain = DMatrix::from_row_slice(2, 2, &[-1.1, -0.2, 0.1, -1.0]);
        let demo = demo_from_gain(&gain, 0.1, 100, 25, 34);
        let estimated = estimate_gain_mle(&demo).unwrap();
        let mut correlation = DMatrix::zeros(2, 2);
        let mut scale = 0.0;
        for traj in demo.trajectories() {
            for t in 0..traj.len() {
                let s = &traj.states()[t];
                let a = &traj.actions()[t];
                let residual = a - &estimated * s;
                correlation += residual * s.transpose();
                scale += s.norm_squared();
            }
        }
        assert!(correlation.norm() / scale < 1e-8);
    }
}
