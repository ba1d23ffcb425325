//! Empirical risk minimization over the unit simplex within one hypothesis
//! class.
//!
//! The objective (mean Euclidean norm of per-trajectory gradient estimates)
//! is convex in the weights, so projected (sub)gradient descent with a
//! backtracking line search finds a global minimizer; random restarts are a
//! safeguard, not a necessity. The simplex constraint removes the scalar
//! ambiguity of policy-gradient stationarity and excludes the zero weights.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{HypothesisClass, RewardParams};
use crate::mdp::{Demonstration, GaussianLinearPolicy};
use crate::risk::{LossKind, LossSpec, RiskModel};
use crate::seeding::stream_rng;

/// Step-size rule for the projected descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepRule {
    /// Constant step size; the objective may oscillate, the best iterate is
    /// kept.
    Fixed(f64),
    /// Backtracking line search; accepted iterations never increase the
    /// objective.
    Backtracking,
}

/// Solver configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErmConfig {
    pub max_iterations: usize,
    /// Stop when the projected step norm falls below this.
    pub tolerance: f64,
    /// Random simplex initials tried in addition to the uniform initial.
    pub restarts: usize,
    pub step_rule: StepRule,
    pub seed: u64,
}

impl Default for ErmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            tolerance: 1e-8,
            restarts: 5,
            step_rule: StepRule::Backtracking,
            seed: 0,
        }
    }
}

impl ErmConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "max_iterations must be positive".into(),
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        if let StepRule::Fixed(step) = self.step_rule {
            if !(step > 0.0) {
                return Err(Error::InvalidArgument(
                    "fixed step size must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Result of one ERM solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErmSolution {
    pub params: RewardParams,
    /// Empirical risk achieved at `params`.
    pub risk: f64,
    /// Iterations used by the run that produced the best iterate.
    pub iterations: usize,
    pub converged: bool,
}

/// Euclidean projection onto the unit simplex `{w >= 0, ||w||_1 = 1}` by the
/// sort-and-threshold characterization.
pub fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (j, &value) in sorted.iter().enumerate() {
        cumulative += value;
        let candidate = (cumulative - 1.0) / (j as f64 + 1.0);
        if value - candidate > 0.0 {
            threshold = candidate;
        }
    }
    v.map(|x| (x - threshold).max(0.0))
}

/// Uniform sample from the unit simplex (normalized exponentials).
pub fn random_simplex_point<R: Rng>(dim: usize, rng: &mut R) -> DVector<f64> {
    let mut v = DVector::from_fn(dim, |_, _| {
        let u: f64 = rng.random();
        -(1.0 - u).ln()
    });
    let total: f64 = v.iter().sum();
    v /= total;
    v
}

struct DescentOutcome {
    omega: DVector<f64>,
    risk: f64,
    iterations: usize,
    converged: bool,
}

const MIN_STEP: f64 = 1e-20;
/// Sufficient-decrease constant for the backtracking acceptance test.
const ARMIJO: f64 = 1e-4;

fn descend(model: &RiskModel, start: DVector<f64>, config: &ErmConfig) -> Result<DescentOutcome> {
    let mut x = project_simplex(&start);
    let mut fx = model.risk(&x);
    if !fx.is_finite() {
        return Err(Error::NonFiniteObjective { iteration: 0 });
    }
    let mut best = (fx, x.clone());
    let mut alpha = 1.0f64;
    let mut iterations = 0;
    let mut converged = false;

    for iter in 0..config.max_iterations {
        iterations = iter + 1;
        let (_, grad) = model.risk_and_subgrad(&x);
        match config.step_rule {
            StepRule::Backtracking => {
                let mut a = alpha * 2.0;
                let mut accepted = None;
                while a >= MIN_STEP {
                    let candidate = project_simplex(&(&x - a * &grad));
                    let fc = model.risk(&candidate);
                    if !fc.is_finite() {
                        return Err(Error::NonFiniteObjective { iteration: iterations });
                    }
                    let step_sq = (&candidate - &x).norm_squared();
                    if fc <= fx - ARMIJO * step_sq / a {
                        accepted = Some((candidate, fc, a));
                        break;
                    }
                    a *= 0.5;
                }
                match accepted {
                    Some((candidate, fc, a)) => {
                        let step_norm = (&candidate - &x).norm();
                        x = candidate;
                        fx = fc;
                        alpha = a;
                        if fx < best.0 {
                            best = (fx, x.clone());
                        }
                        if step_norm <= config.tolerance {
                            converged = true;
                            break;
                        }
                    }
                    None => {
                        // No decrease at any step length: (sub)stationary.
                        converged = true;
                        break;
                    }
                }
            }
            StepRule::Fixed(step) => {
                let candidate = project_simplex(&(&x - step * &grad));
                let fc = model.risk(&candidate);
                if !fc.is_finite() {
                    return Err(Error::NonFiniteObjective { iteration: iterations });
                }
                let step_norm = (&candidate - &x).norm();
                x = candidate;
                fx = fc;
                if fx < best.0 {
                    best = (fx, x.clone());
                }
                if step_norm <= config.tolerance {
                    converged = true;
                    break;
                }
            }
        }
    }

    Ok(DescentOutcome {
        omega: best.1,
        risk: best.0,
        iterations,
        converged,
    })
}

/// Solves the ERM problem for one class: projected (sub)gradient descent on
/// the empirical risk over the simplex, best of the uniform initial plus
/// `restarts` random initials. Ties keep the earliest run.
pub fn solve_erm(
    demo: &Demonstration,
    policy: &GaussianLinearPolicy,
    class: &HypothesisClass,
    spec: &LossSpec,
    config: &ErmConfig,
    discount: f64,
) -> Result<ErmSolution> {
    config.validate()?;
    debug_assert_eq!(spec.kind(), LossKind::EuclideanNorm);
    let dim = class.total_dim();
    let model = RiskModel::build(demo, policy, class, discount)?;

    if dim == 1 {
        let omega = DVector::from_element(1, 1.0);
        let risk = model.risk(&omega);
        return Ok(ErmSolution {
            params: RewardParams::new(class.index(), omega)?,
            risk,
            iterations: 0,
            converged: true,
        });
    }

    let mut initials = vec![DVector::from_element(dim, 1.0 / dim as f64)];
    let mut rng: ChaCha8Rng = stream_rng(config.seed, class.index() as u64);
    for _ in 0..config.restarts {
        initials.push(random_simplex_point(dim, &mut rng));
    }

    let outcomes: Vec<Result<DescentOutcome>> = initials
        .into_par_iter()
        .map(|start| descend(&model, start, config))
        .collect();

    let mut best: Option<DescentOutcome> = None;
    for outcome in outcomes {
        let outcome = outcome?;
        let better = match &best {
            None => true,
            Some(current) => outcome.risk < current.risk,
        };
        if better {
            best = Some(outcome);
        }
    }
    let best = best.expect("at least the uniform initial ran");

    Ok(ErmSolution {
        params: RewardParams::new(class.index(), best.omega)?,
        risk: best.risk,
        iterations: best.iterations,
        converged: best.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureTerm;
    use crate::mdp::{sample_demonstration, InitialDistribution, LqrSystem};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    #[test]
    fn projection_keeps_feasible_points() {
        let v = DVector::from_vec(vec![0.5, 0.5]);
        assert_eq!(project_simplex(&v), v);
    }

    #[test]
    fn projection_maps_to_vertex() {
        let v = DVector::from_vec(vec![2.0, 0.0]);
        assert_eq!(project_simplex(&v), DVector::from_vec(vec![1.0, 0.0]));
    }

    #[test]
    fn projection_matches_quadratic_program_oracle_case() {
        // Oracle by the threshold equation: sum_i max(v_i - tau, 0) = 1 at
        // tau = -0.1 gives (0.5, 0.3, 0.2).
        let v = DVector::from_vec(vec![0.4, 0.2, 0.1]);
        let w = project_simplex(&v);
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(w[2], 0.2, epsilon = 1e-12);
    }

    /// Independent oracle: bisection on the threshold in
    /// `sum_i max(v_i - tau, 0) = 1`, avoiding the sort-based path.
    pub(crate) fn project_simplex_bisection(v: &DVector<f64>) -> DVector<f64> {
        let mut lo = v.min() - 1.0;
        let mut hi = v.max();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let mass: f64 = v.iter().map(|x| (x - mid).max(0.0)).sum();
            if mass > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let tau = 0.5 * (lo + hi);
        v.map(|x| (x - tau).max(0.0))
    }

    #[test]
    fn projection_matches_bisection_oracle_on_random_vectors() {
        let mut rng = stream_rng(41, 0);
        for _ in 0..1000 {
            let dim = 1 + (rng.random::<u32>() % 12) as usize;
            let v = DVector::from_fn(dim, |_, _| rng.random::<f64>() * 10.0 - 5.0);
            let fast = project_simplex(&v);
            let oracle = project_simplex_bisection(&v);
            assert!(
                (&fast - &oracle).norm() < 1e-8,
                "projection mismatch: {fast} vs {oracle}"
            );
        }
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_satisfies_threshold_equation(
            values in proptest::collection::vec(-50.0f64..50.0, 1..16)
        ) {
            let v = DVector::from_vec(values);
            let w = project_simplex(&v);
            prop_assert!(w.min() >= 0.0);
            let total: f64 = w.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            // Threshold characterization: on the support, v - w is constant.
            let taus: Vec<f64> = v
                .iter()
                .zip(w.iter())
                .filter(|(_, &wi)| wi > 0.0)
                .map(|(vi, wi)| vi - wi)
                .collect();
            let tau = taus[0];
            for t in &taus {
                prop_assert!((t - tau).abs() < 1e-10);
            }
            // Off the support, v_i <= tau.
            for (vi, wi) in v.iter().zip(w.iter()) {
                if *wi == 0.0 {
                    prop_assert!(*vi <= tau + 1e-10);
                }
            }
        }
    }

    fn lqr_demo() -> (Demonstration, GaussianLinearPolicy, LqrSystem) {
        let sys = LqrSystem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
            DMatrix::identity(2, 2) * 0.1,
            20,
            0.9,
        )
        .unwrap();
        let gain = DMatrix::from_row_slice(2, 2, &[-1.2, -0.4, -0.1, -1.3]);
        let policy = GaussianLinearPolicy::new(gain, 0.1).unwrap();
        let dist = InitialDistribution::symmetric_unit_box(2);
        let demo = sample_demonstration(&sys, &policy, &dist, 60, 55).unwrap();
        (demo, policy, sys)
    }

    #[test]
    fn singleton_simplex_returns_immediately() {
        let (demo, policy, sys) = lqr_demo();
        // One term, action-only power over a 1-coordinate... build a class
        // with a single scalar coordinate: state power 1 in 1D is not this
        // system; use a 2D quadratic trace surrogate instead: no single-dim
        // term exists for 2D, so craft a 1D demo.
        let _ = (demo, policy, sys);
        let sys1 = LqrSystem::new(
            DMatrix::from_row_slice(1, 1, &[0.9]),
            DMatrix::from_row_slice(1, 1, &[0.3]),
            8,
            0.9,
        )
        .unwrap();
        let policy1 =
            GaussianLinearPolicy::new(DMatrix::from_row_slice(1, 1, &[-0.5]), 0.1).unwrap();
        let demo1 = sample_demonstration(
            &sys1,
            &policy1,
            &InitialDistribution::symmetric_unit_box(1),
            5,
            3,
        )
        .unwrap();
        let class =
            HypothesisClass::new(1, vec![FeatureTerm::new(1, 0).unwrap()], 1, 1, true).unwrap();
        let sol = solve_erm(
            &demo1,
            &policy1,
            &class,
            &LossSpec::euclidean(),
            &ErmConfig::default(),
            0.9,
        )
        .unwrap();
        assert_eq!(sol.params.omega().as_slice(), &[1.0]);
        assert_eq!(sol.iterations, 0);
        assert!(sol.converged);
    }

    #[test]
    fn solution_no_worse_than_uniform_weights() {
        let (demo, policy, sys) = lqr_demo();
        let class = crate::features::default_lqr_classes(2, 2).classes()[2].clone();
        let spec = LossSpec::euclidean();
        let config = ErmConfig {
            max_iterations: 2000,
            seed: 7,
            ..ErmConfig::default()
        };
        let sol = solve_erm(&demo, &policy, &class, &spec, &config, sys.discount()).unwrap();
        let d = class.total_dim();
        let uniform = RewardParams::new(3, DVector::from_element(d, 1.0 / d as f64)).unwrap();
        let uniform_risk = crate::risk::empirical_risk(
            &demo,
            &policy,
            &class,
            &uniform,
            &spec,
            sys.discount(),
        )
        .unwrap();
        assert!(sol.risk <= uniform_risk + 1e-12);
    }

    #[test]
    fn solution_beats_monte_carlo_simplex_sampling() {
        let (demo, policy, sys) = lqr_demo();
        let class = crate::features::default_lqr_classes(2, 2).classes()[0].clone();
        let config = ErmConfig {
            seed: 11,
            ..ErmConfig::default()
        };
        let sol = solve_erm(
            &demo,
            &policy,
            &class,
            &LossSpec::euclidean(),
            &config,
            sys.discount(),
        )
        .unwrap();
        let model = RiskModel::build(&demo, &policy, &class, sys.discount()).unwrap();
        let mut rng = stream_rng(11, 99);
        let best_random = (0..1000)
            .map(|_| model.risk(&random_simplex_point(class.total_dim(), &mut rng)))
            .fold(f64::INFINITY, f64::min);
        assert!(sol.risk <= best_random + 1e-12);
    }

    #[test]
    fn backtracking_descent_is_monotone() {
        let (demo, policy, sys) = lqr_demo();
        let class = crate::features::default_lqr_classes(2, 2).classes()[1].clone();
        let model = RiskModel::build(&demo, &policy, &class, sys.discount()).unwrap();
        // Re-run the descent manually, tracking objective values.
        let dim = class.total_dim();
        let mut x = DVector::from_element(dim, 1.0 / dim as f64);
        let mut fx = model.risk(&x);
        let mut alpha = 1.0f64;
        for _ in 0..200 {
            let (_, grad) = model.risk_and_subgrad(&x);
            let mut a = alpha * 2.0;
            let mut moved = false;
            while a >= MIN_STEP {
                let candidate = project_simplex(&(&x - a * &grad));
                let fc = model.risk(&candidate);
                let step_sq = (&candidate - &x).norm_squared();
                if fc <= fx - ARMIJO * step_sq / a {
                    assert!(fc <= fx, "accepted step must not increase the objective");
                    x = candidate;
                    fx = fc;
                    alpha = a;
                    moved = true;
                    break;
                }
                a *= 0.5;
            }
            if !moved {
                break;
            }
        }
    }

    #[test]
    fn equal_seeds_reproduce_solutions() {
        let (demo, policy, sys) = lqr_demo();
        let class = crate::features::default_lqr_classes(2, 2).classes()[2].clone();
        let config = ErmConfig {
            seed: 21,
            ..ErmConfig::default()
        };
        let a = solve_erm(
            &demo,
            &policy,
            &class,
            &LossSpec::euclidean(),
            &config,
            sys.discount(),
        )
        .unwrap();
        let b = solve_erm(
            &demo,
            &policy,
            &class,
            &LossSpec::euclidean(),
            &config,
            sys.discount(),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let (demo, policy, sys) = lqr_demo();
        let class = crate::features::default_lqr_classes(2, 2).classes()[0].clone();
        let config = ErmConfig {
            tolerance: 0.0,
            ..ErmConfig::default()
        };
        assert!(solve_erm(
            &demo,
            &policy,
            &class,
            &LossSpec::euclidean(),
            &config,
            sys.discount(),
        )
        .is_err());
    }
}
