//! Shared experiment plumbing: seed streams, expert training, true-weight
//! construction, dataset subsampling, and the full selection pipeline from
//! a demonstration.

use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use srm_irl::erm::ErmConfig;
use srm_irl::features::{HypothesisClass, RewardParams};
use srm_irl::learning::{estimate_gain_mle, train_reinforce, TrainConfig, TrainResult};
use srm_irl::mdp::{sample_demonstration, Demonstration, GaussianLinearPolicy};
use srm_irl::seeding::{derive_seed, stream_rng};
use srm_irl::srm::{select_model, SrmConfig, SrmReport};

use crate::config::Experiment;

/// Stream tags hung off the experiment's base seed.
pub mod streams {
    pub const TRAIN: u64 = 1;
    pub const DEMONSTRATION: u64 = 2;
    pub const SWEEP: u64 = 3;
    pub const TRIALS: u64 = 4;
    pub const ERM: u64 = 5;
}

/// The true quadratic cost as a reward evaluator: `-(s'Qs + a'Ra)`.
pub fn true_cost_reward<'a>(
    q: &'a DMatrix<f64>,
    r: &'a DMatrix<f64>,
) -> impl Fn(&DVector<f64>, &DVector<f64>) -> f64 + 'a {
    move |s, a| -((s.transpose() * q * s)[(0, 0)] + (a.transpose() * r * a)[(0, 0)])
}

/// Trains the expert policy on the true cost from a zero initial gain.
pub fn train_expert(exp: &Experiment) -> Result<TrainResult> {
    let initial = GaussianLinearPolicy::new(
        DMatrix::zeros(exp.system.action_dim(), exp.system.state_dim()),
        exp.noise_std,
    )?;
    let config = TrainConfig {
        seed: derive_seed(exp.config.seed, streams::TRAIN),
        ..exp.train
    };
    let reward = true_cost_reward(&exp.q, &exp.r);
    train_reinforce(&exp.system, reward, &exp.initial_dist, &initial, &config)
        .context("training the expert policy")
}

/// Samples a demonstration from the expert on the given stream.
pub fn collect_demonstration(
    exp: &Experiment,
    expert: &GaussianLinearPolicy,
    size: usize,
    stream: u64,
) -> Result<Demonstration> {
    Ok(sample_demonstration(
        &exp.system,
        expert,
        &exp.initial_dist,
        size,
        derive_seed(exp.config.seed, stream),
    )?)
}

/// The normalized stacking of `(vec Q, vec R)` into a class containing the
/// joint quadratic term; every other coordinate is zero. Errors when the
/// class cannot represent the quadratic cost.
pub fn true_weights(
    class: &HypothesisClass,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<RewardParams> {
    let n = class.state_dim();
    let m = class.action_dim();
    let mut omega = DVector::zeros(class.total_dim());
    let mut offset = 0;
    let mut placed = false;
    for term in class.terms() {
        if term.state_power() == 2 && term.action_power() == 2 {
            for i in 0..n {
                for j in 0..n {
                    omega[offset + i * n + j] = q[(i, j)];
                }
            }
            for i in 0..m {
                for j in 0..m {
                    omega[offset + n * n + i * m + j] = r[(i, j)];
                }
            }
            placed = true;
        }
        offset += term.output_dim(n, m);
    }
    if !placed {
        bail!(
            "class {} has no joint quadratic term; the true cost is not representable",
            class.index()
        );
    }
    let l1: f64 = omega.iter().map(|w: &f64| w.abs()).sum();
    omega /= l1;
    Ok(RewardParams::new(class.index(), omega)?)
}

/// A seed-shuffled trajectory ordering; sweeps take prefixes of it so the
/// subsamples are nested across sizes.
pub fn subsample_order(len: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut stream_rng(seed, 0));
    order
}

/// The first `size` trajectories of the seed-shuffled ordering.
pub fn subsample(demo: &Demonstration, size: usize, seed: u64) -> Result<Demonstration> {
    if size == 0 || size > demo.len() {
        bail!(
            "subsample size {size} out of range for a demonstration of {}",
            demo.len()
        );
    }
    let order = subsample_order(demo.len(), seed);
    let trajectories = order[..size]
        .iter()
        .map(|&i| demo.trajectories()[i].clone())
        .collect();
    Ok(Demonstration::new(trajectories, seed)?)
}

/// The scoring policy of the selection pipeline: the maximum-likelihood
/// gain from the demonstration with the configured exploration noise.
pub fn mle_policy(demo: &Demonstration, noise_std: f64) -> Result<GaussianLinearPolicy> {
    Ok(GaussianLinearPolicy::new(
        estimate_gain_mle(demo)?,
        noise_std,
    )?)
}

/// Full selection from a demonstration: estimate the gain by maximum
/// likelihood, then run the model-selection loop with seeds derived from
/// the given stream.
pub fn run_selection(exp: &Experiment, demo: &Demonstration, erm_stream: u64) -> Result<SrmReport> {
    let policy = mle_policy(demo, exp.noise_std)?;
    let config = SrmConfig {
        erm: ErmConfig {
            seed: derive_seed(exp.config.seed, erm_stream),
            ..exp.srm.erm
        },
        ..exp.srm
    };
    Ok(select_model(
        demo,
        &policy,
        &exp.classes,
        &config,
        exp.system.discount(),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use srm_irl::features::reward_eval;

    fn small_experiment() -> Experiment {
        let mut config = ExperimentConfig::default();
        config.system.horizon = 8;
        config.demonstration.size = 20;
        config.training.episodes = 3;
        config.training.batch_size = 10;
        config.resolve().unwrap()
    }

    #[test]
    fn true_weights_reproduce_the_quadratic_cost() {
        let exp = small_experiment();
        let class = &exp.classes.classes()[2];
        let params = true_weights(class, &exp.q, &exp.r).unwrap();
        let scale: f64 = exp.q.iter().map(|v| v.abs()).sum::<f64>()
            + exp.r.iter().map(|v| v.abs()).sum::<f64>();
        let mut rng = stream_rng(3, 0);
        use rand::Rng;
        for _ in 0..20 {
            let s = DVector::from_fn(2, |_, _| rng.random::<f64>() - 0.5);
            let a = DVector::from_fn(2, |_, _| rng.random::<f64>() - 0.5);
            let direct = true_cost_reward(&exp.q, &exp.r)(&s, &a) / scale;
            let via_class = reward_eval(class, &params, &s, &a).unwrap();
            assert!((direct - via_class).abs() < 1e-12);
        }
    }

    #[test]
    fn true_weights_need_the_joint_quadratic_term() {
        let exp = small_experiment();
        for index in [0usize, 1] {
            assert!(true_weights(&exp.classes.classes()[index], &exp.q, &exp.r).is_err());
        }
        for index in [2usize, 3, 4] {
            assert!(true_weights(&exp.classes.classes()[index], &exp.q, &exp.r).is_ok());
        }
    }

    #[test]
    fn subsamples_are_nested_across_sizes() {
        let exp = small_experiment();
        let expert = GaussianLinearPolicy::new(DMatrix::zeros(2, 2), 0.1).unwrap();
        let demo = collect_demonstration(&exp, &expert, 20, streams::DEMONSTRATION).unwrap();
        let small = subsample(&demo, 5, 99).unwrap();
        let large = subsample(&demo, 12, 99).unwrap();
        for i in 0..5 {
            assert_eq!(small.trajectories()[i], large.trajectories()[i]);
        }
        assert!(subsample(&demo, 21, 99).is_err());
    }

    #[test]
    fn full_size_subsample_uses_every_trajectory_once() {
        let exp = small_experiment();
        let expert = GaussianLinearPolicy::new(DMatrix::zeros(2, 2), 0.1).unwrap();
        let demo = collect_demonstration(&exp, &expert, 20, streams::DEMONSTRATION).unwrap();
        let full = subsample(&demo, 20, 7).unwrap();
        for traj in demo.trajectories() {
            assert_eq!(
                full.trajectories().iter().filter(|t| *t == traj).count(),
                1
            );
        }
    }

    #[test]
    fn selection_pipeline_runs_end_to_end() {
        let exp = small_experiment();
        let expert = GaussianLinearPolicy::new(
            DMatrix::from_row_slice(2, 2, &[-0.8, -0.2, -0.1, -0.9]),
            0.1,
        )
        .unwrap();
        let demo = collect_demonstration(&exp, &expert, 20, streams::DEMONSTRATION).unwrap();
        let report = run_selection(&exp, &demo, streams::ERM).unwrap();
        assert_eq!(report.per_class.len(), 5);
        assert!(report.selected >= 1 && report.selected <= 5);
    }
}
