//! Rademacher-complexity machinery: output clipping, the closed-form bound
//! for linear weighted-sum classes, the complexity penalty of the
//! gradient-based risk, a Monte-Carlo empirical-Rademacher oracle, and
//! generalization bound diagnostics.
//!
//! Under the unit simplex constraint the weight bound is 1 and no clipping
//! is needed in the linear pipeline; [`clip_scalar`]/[`clip_vector`] exist
//! for the diagnostics' output bound and for non-simplex classes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{feature_bound, HypothesisClass};
use crate::mdp::Demonstration;
use crate::risk::{LossSpec, ScoreProfile};

/// Clips a scalar to `[-bound, bound]`.
pub fn clip_scalar(value: f64, bound: f64) -> f64 {
    assert!(bound > 0.0, "clip bound must be positive");
    if value.abs() > bound {
        value.signum() * bound
    } else {
        value
    }
}

/// Rescales a vector to Euclidean norm `bound` when it exceeds it.
pub fn clip_vector(value: &DVector<f64>, bound: f64) -> DVector<f64> {
    assert!(bound > 0.0, "clip bound must be positive");
    let norm = value.norm();
    if norm > bound {
        value * (bound / norm)
    } else {
        value.clone()
    }
}

/// Closed-form empirical Rademacher bound for a linear weighted-sum class on
/// the timestep-`k` slice of a demonstration:
/// `(B_omega / sqrt(M)) * sum_p Phi_p(k)`.
pub fn linear_class_bound(
    class: &HypothesisClass,
    demo: &Demonstration,
    k: usize,
    b_omega: f64,
) -> Result<f64> {
    let bounds = feature_bound(class, demo, k)?;
    let m = demo.len() as f64;
    Ok(b_omega / m.sqrt() * bounds.iter().sum::<f64>())
}

/// Per-draw values of the Monte-Carlo empirical Rademacher estimate.
///
/// Each draw evaluates the exact supremum over the simplex of the signed
/// empirical correlation, which for a linear class is attained at a vertex:
/// it is the maximum coordinate of `(1/M) sum_i sigma_i phi(s_k^i, a_k^i)`
/// (of its negation for cost-signed classes).
pub fn mc_rademacher_samples<R: Rng>(
    class: &HypothesisClass,
    demo: &Demonstration,
    k: usize,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if draws == 0 {
        return Err(Error::InvalidArgument("draws must be positive".into()));
    }
    let horizon = demo.horizon();
    if k >= horizon {
        return Err(Error::TimestepOutOfRange { k, horizon });
    }
    let m = demo.len();
    let dim = class.total_dim();
    // Feature matrix of the k-slice, one row per trajectory.
    let mut features = DMatrix::zeros(m, dim);
    for (i, traj) in demo.trajectories().iter().enumerate() {
        let phi = class.eval_features(&traj.states()[k], &traj.actions()[k])?;
        features.row_mut(i).copy_from(&phi.transpose());
    }
    let sign = class.sign();
    let mut values = Vec::with_capacity(draws);
    for _ in 0..draws {
        let mut correlation = DVector::zeros(dim);
        for i in 0..m {
            let sigma = if rng.random::<bool>() { 1.0 } else { -1.0 };
            for d in 0..dim {
                correlation[d] += sigma * features[(i, d)];
            }
        }
        correlation /= m as f64;
        let supremum = correlation
            .iter()
            .map(|&u| sign * u)
            .fold(f64::NEG_INFINITY, f64::max);
        values.push(supremum);
    }
    Ok(values)
}

/// Monte-Carlo estimate of the empirical Rademacher complexity of the class
/// on the timestep-`k` slice: the mean of [`mc_rademacher_samples`].
pub fn mc_rademacher<R: Rng>(
    class: &HypothesisClass,
    demo: &Demonstration,
    k: usize,
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    let values = mc_rademacher_samples(class, demo, k, draws, rng)?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// The complexity penalty of one class on a demonstration, with its
/// per-timestep decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyBreakdown {
    /// Per timestep `k`: the linear-class bound `(1/sqrt(M)) sum_p Phi_p(k)`.
    pub per_k_class_bound: Vec<f64>,
    /// Per timestep `t`: `L * max-score_t * sum_{k>=t} gamma^{k-t} bound_k`,
    /// the `t`-th term of the penalty's outer sum.
    pub per_t_weight: Vec<f64>,
    /// The penalty: the sum of `per_t_weight`.
    pub total: f64,
}

/// Penalty on the gradient-based risk of one class:
/// `L * sum_t sum_{k>=t} gamma^{k-t} * max-score_t * bound_k`, with
/// `bound_k` the Lemma-style linear-class bound at unit weight bound.
pub fn penalty(
    class: &HypothesisClass,
    demo: &Demonstration,
    score: &ScoreProfile,
    spec: &LossSpec,
    discount: f64,
) -> Result<PenaltyBreakdown> {
    let horizon = demo.horizon();
    if score.horizon() != horizon {
        return Err(Error::DimensionMismatch {
            context: "score profile horizon",
            expected: horizon,
            actual: score.horizon(),
        });
    }
    let per_k_class_bound: Vec<f64> = (0..horizon)
        .map(|k| linear_class_bound(class, demo, k, 1.0))
        .collect::<Result<_>>()?;
    // Suffix recursion for sum_{k>=t} gamma^{k-t} bound_k.
    let mut discounted_tail = vec![0.0; horizon];
    let mut acc = 0.0;
    for t in (0..horizon).rev() {
        acc = per_k_class_bound[t] + discount * acc;
        discounted_tail[t] = acc;
    }
    let lipschitz = spec.lipschitz();
    let per_t_weight: Vec<f64> = (0..horizon)
        .map(|t| lipschitz * score.per_t_max()[t] * discounted_tail[t])
        .collect();
    let total = per_t_weight.iter().sum();
    Ok(PenaltyBreakdown {
        per_k_class_bound,
        per_t_weight,
        total,
    })
}

/// Evaluated right-hand sides of the generalization bounds, reported as
/// diagnostics; no selection decision depends on them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundDiagnostics {
    pub delta: f64,
    /// Output bound `B` used by the confidence term.
    pub clip_bound: f64,
    /// Risk + 2 penalty + confidence term at `log(4/delta)`.
    pub union_bound_value: f64,
    /// Risk + 2 penalty + confidence term at `log(4(C+1)/delta)`.
    pub srm_bound_value: f64,
    /// Linear-class variant: risk + 4 penalty + confidence term at
    /// `log(4(C+1)/delta)`.
    pub linear_srm_bound_value: f64,
    /// The discounted score mass `sum_t max-score_t * sum_{k>=t} gamma^{k-t}`
    /// entering every confidence term.
    pub score_mass: f64,
}

/// Evaluates the bound diagnostics for one class.
///
/// The confidence terms substitute the per-timestep maximum score norm for
/// the unindexed score norm of the stated bounds.
#[allow(clippy::too_many_arguments)]
pub fn bound_diagnostics(
    risk: f64,
    penalty: &PenaltyBreakdown,
    score: &ScoreProfile,
    spec: &LossSpec,
    clip_bound: f64,
    sample_count: usize,
    class_count: usize,
    delta: f64,
    discount: f64,
) -> Result<BoundDiagnostics> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    if sample_count == 0 {
        return Err(Error::EmptyDemonstration);
    }
    let horizon = score.horizon();
    // sum_{k>=t} gamma^{k-t} by suffix recursion.
    let mut tail = vec![0.0; horizon];
    let mut acc = 0.0;
    for t in (0..horizon).rev() {
        acc = 1.0 + discount * acc;
        tail[t] = acc;
    }
    let score_mass: f64 = (0..horizon)
        .map(|t| score.per_t_max()[t] * tail[t])
        .sum();
    let m = sample_count as f64;
    let confidence = |log_arg: f64| -> f64 {
        3.0 * spec.lipschitz() * clip_bound * score_mass * (log_arg.ln() / (2.0 * m)).sqrt()
    };
    let union_bound_value = risk + 2.0 * penalty.total + confidence(4.0 / delta);
    let srm_log = 4.0 * (class_count as f64 + 1.0) / delta;
    let srm_bound_value = risk + 2.0 * penalty.total + confidence(srm_log);
    let linear_srm_bound_value = risk + 4.0 * penalty.total + confidence(srm_log);
    let diagnostics = BoundDiagnostics {
        delta,
        clip_bound,
        union_bound_value,
        srm_bound_value,
        linear_srm_bound_value,
        score_mass,
    };
    if !(diagnostics.union_bound_value.is_finite()
        && diagnostics.srm_bound_value.is_finite()
        && diagnostics.linear_srm_bound_value.is_finite())
    {
        return Err(Error::InvalidArgument(
            "bound diagnostics are non-finite".into(),
        ));
    }
    Ok(diagnostics)
}
