//! Structural risk assembly and the model-selection loop.
//!
//! For every candidate class the loop solves the ERM problem, computes the
//! complexity penalty, and forms the structural risk (empirical risk plus
//! twice the penalty). The class minimizing the structural risk wins, with
//! ties broken toward the smaller index (the simpler model).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexity::{bound_diagnostics, penalty, BoundDiagnostics, PenaltyBreakdown};
use crate::erm::{solve_erm, ErmConfig, ErmSolution};
use crate::error::{Error, Result};
use crate::features::{reward_eval, HypothesisSet, RewardParams};
use crate::mdp::{Demonstration, GaussianLinearPolicy};
use crate::risk::{score_profile, LossSpec};
use crate::seeding::derive_seed;

/// Configuration of the selection loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrmConfig {
    pub erm: ErmConfig,
    pub loss: LossSpec,
    /// Penalty weight in the structural risk. The standard value is 2; other
    /// values are a non-standard override.
    pub penalty_weight: f64,
    /// Confidence level for the bound diagnostics.
    pub delta: f64,
}

impl Default for SrmConfig {
    fn default() -> Self {
        Self {
            erm: ErmConfig::default(),
            loss: LossSpec::euclidean(),
            penalty_weight: 2.0,
            delta: 0.05,
        }
    }
}

/// Per-class outcome of the selection loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassResult {
    pub class_index: usize,
    pub erm: ErmSolution,
    /// Empirical risk at the ERM weights.
    pub empirical_risk: f64,
    pub penalty: PenaltyBreakdown,
    /// `empirical_risk + penalty_weight * penalty.total`.
    pub structural_risk: f64,
}

/// Full model-selection report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrmReport {
    pub per_class: Vec<ClassResult>,
    /// Selected class index (1-based).
    pub selected: usize,
    /// The ERM weights of the selected class.
    pub solution: RewardParams,
    /// Bound diagnostics for the selected class.
    pub diagnostics: BoundDiagnostics,
    /// Root seed of the per-class solver streams.
    pub seed: u64,
    pub penalty_weight: f64,
    pub delta: f64,
}

/// Structural risk of one class: empirical risk plus the weighted penalty.
pub fn structural_risk(empirical_risk: f64, penalty_total: f64, penalty_weight: f64) -> f64 {
    empirical_risk + penalty_weight * penalty_total
}

/// Index (0-based) of the minimum structural risk, smallest index on ties.
pub(crate) fn argmin_structural(results: &[ClassResult]) -> usize {
    let mut best = 0;
    for (i, result) in results.iter().enumerate().skip(1) {
        if result.structural_risk < results[best].structural_risk {
            best = i;
        }
    }
    best
}

/// Runs the selection loop: per class, ERM plus penalty, then the argmin.
///
/// Classes are solved independently (in parallel) with solver seeds derived
/// per class index, so results do not depend on scheduling.
pub fn select_model(
    demo: &Demonstration,
    policy: &GaussianLinearPolicy,
    classes: &HypothesisSet,
    config: &SrmConfig,
    discount: f64,
) -> Result<SrmReport> {
    let score = score_profile(demo, policy);
    let per_class: Vec<ClassResult> = classes
        .classes()
        .par_iter()
        .map(|class| -> Result<ClassResult> {
            let tag = |e: Error| Error::ClassSolve {
                class_index: class.index(),
                source: Box::new(e),
            };
            let erm_config = ErmConfig {
                seed: derive_seed(config.erm.seed, class.index() as u64),
                ..config.erm
            };
            let erm = solve_erm(demo, policy, class, &config.loss, &erm_config, discount)
                .map_err(tag)?;
            let breakdown =
                penalty(class, demo, &score, &config.loss, discount).map_err(tag)?;
            let empirical_risk = erm.risk;
            let structural =
                structural_risk(empirical_risk, breakdown.total, config.penalty_weight);
            Ok(ClassResult {
                class_index: class.index(),
                erm,
                empirical_risk,
                penalty: breakdown,
                structural_risk: structural,
            })
        })
        .collect::<Result<_>>()?;

    let best = argmin_structural(&per_class);
    let selected = per_class[best].class_index;
    let solution = per_class[best].erm.params.clone();

    // Output bound for the diagnostics: the largest reward magnitude
    // observed on the demonstration under the selected ERM weights.
    let class = &classes.classes()[best];
    let mut clip_bound = 0.0f64;
    for traj in demo.trajectories() {
        for t in 0..traj.len() {
            let r = reward_eval(class, &solution, &traj.states()[t], &traj.actions()[t])?;
            clip_bound = clip_bound.max(r.abs());
        }
    }
    let clip_bound = clip_bound.max(f64::MIN_POSITIVE);

    let diagnostics = bound_diagnostics(
        per_class[best].empirical_risk,
        &per_class[best].penalty,
        &score,
        &config.loss,
        clip_bound,
        demo.len(),
        classes.len(),
        config.delta,
        discount,
    )?;

    Ok(SrmReport {
        per_class,
        selected,
        solution,
        diagnostics,
        seed: config.erm.seed,
        penalty_weight: config.penalty_weight,
        delta: config.delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erm::ErmSolution;
    use crate::features::default_lqr_classes;
    use crate::mdp::{sample_demonstration, InitialDistribution, LqrSystem};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn structural_risk_is_the_weighted_sum() {
        assert_abs_diff_eq!(structural_risk(0.3, 0.1, 2.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(structural_risk(0.42, 0.0, 2.0), 0.42, epsilon = 1e-15);
        let base = structural_risk(0.3, 0.1, 2.0);
        let doubled = structural_risk(0.3, 0.2, 2.0);
        assert_abs_diff_eq!(doubled - base, 2.0 * 0.1, epsilon = 1e-15);
    }

    fn synthetic_result(index: usize, empirical: f64, penalty_total: f64) -> ClassResult {
        let omega = DVector::from_element(1, 1.0);
        ClassResult {
            class_index: index,
            erm: ErmSolution {
                params: RewardParams::new(index, omega).unwrap(),
                risk: empirical,
                iterations: 1,
                converged: true,
            },
            empirical_risk: empirical,
            penalty: PenaltyBreakdown {
                per_k_class_bound: vec![penalty_total],
                per_t_weight: vec![penalty_total],
                total: penalty_total,
            },
            structural_risk: structural_risk(empirical, penalty_total, 2.0),
        }
    }

    #[test]
    fn equal_risks_with_growing_penalties_select_the_simplest() {
        let results: Vec<ClassResult> = (1..=5)
            .map(|j| synthetic_result(j, 1.0, 0.1 * j as f64))
            .collect();
        assert_eq!(argmin_structural(&results), 0);
    }

    #[test]
    fn argmin_is_invariant_to_constant_risk_shifts() {
        let base: Vec<ClassResult> = vec![
            synthetic_result(1, 0.9, 0.30),
            synthetic_result(2, 0.5, 0.35),
            synthetic_result(3, 0.2, 0.40),
            synthetic_result(4, 0.19, 0.60),
            synthetic_result(5, 0.18, 0.90),
        ];
        let pick = argmin_structural(&base);
        let shifted: Vec<ClassResult> = base
            .iter()
            .map(|r| synthetic_result(r.class_index, r.empirical_risk + 7.3, r.penalty.total))
            .collect();
        assert_eq!(argmin_structural(&shifted), pick);
    }

    #[test]
    fn ties_break_toward_the_smaller_index() {
        let results = vec![
            synthetic_result(1, 1.0, 0.1),
            synthetic_result(2, 1.0, 0.1),
            synthetic_result(3, 1.0, 0.1),
        ];
        assert_eq!(argmin_structural(&results), 0);
    }

    fn small_problem() -> (Demonstration, GaussianLinearPolicy, LqrSystem) {
        let sys = LqrSystem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
            DMatrix::identity(2, 2) * 0.1,
            10,
            0.9,
        )
        .unwrap();
        let policy = GaussianLinearPolicy::new(
            DMatrix::from_row_slice(2, 2, &[-1.1, -0.4, -0.1, -1.2]),
            0.1,
        )
        .unwrap();
        let dist = InitialDistribution::symmetric_unit_box(2);
        let demo = sample_demonstration(&sys, &policy, &dist, 40, 91).unwrap();
        (demo, policy, sys)
    }

    #[test]
    fn single_class_is_selected_with_its_erm_solution() {
        let (demo, policy, sys) = small_problem();
        let all = default_lqr_classes(2, 2);
        let single = HypothesisSet::new(vec![all.classes()[0].clone()]).unwrap();
        let report =
            select_model(&demo, &policy, &single, &SrmConfig::default(), sys.discount()).unwrap();
        assert_eq!(report.selected, 1);
        assert_eq!(report.per_class.len(), 1);
        assert_eq!(report.solution, report.per_class[0].erm.params);
    }

    #[test]
    fn report_is_complete_and_consistent() {
        let (demo, policy, sys) = small_problem();
        let classes = default_lqr_classes(2, 2);
        let config = SrmConfig {
            erm: ErmConfig {
                max_iterations: 400,
                seed: 5,
                ..ErmConfig::default()
            },
            ..SrmConfig::default()
        };
        let report = select_model(&demo, &policy, &classes, &config, sys.discount()).unwrap();
        assert_eq!(report.per_class.len(), 5);
        for (i, result) in report.per_class.iter().enumerate() {
            assert_eq!(result.class_index, i + 1);
            assert!(result.empirical_risk >= 0.0);
            assert!(result.penalty.total >= 0.0);
            assert_abs_diff_eq!(
                result.structural_risk,
                result.empirical_risk + 2.0 * result.penalty.total,
                epsilon = 1e-12
            );
        }
        let best = report
            .per_class
            .iter()
            .min_by(|a, b| a.structural_risk.partial_cmp(&b.structural_risk).unwrap())
            .unwrap();
        assert_eq!(report.selected, best.class_index);
        let picked = &report.per_class[report.selected - 1];
        assert_eq!(report.solution, picked.erm.params);
        assert!(report.diagnostics.union_bound_value >= picked.empirical_risk);
    }

    #[test]
    fn selection_is_reproducible() {
        let (demo, policy, sys) = small_problem();
        let classes = default_lqr_classes(2, 2);
        let config = SrmConfig {
            erm: ErmConfig {
                max_iterations: 300,
                seed: 17,
                ..ErmConfig::default()
            },
            ..SrmConfig::default()
        };
        let a = select_model(&demo, &policy, &classes, &config, sys.discount()).unwrap();
        let b = select_model(&demo, &policy, &classes, &config, sys.discount()).unwrap();
        assert_eq!(a, b);
    }
}
