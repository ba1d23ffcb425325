//! Polynomial feature maps and linear weighted-sum reward hypotheses.
//!
//! A hypothesis class is an ordered list of feature terms; each term
//! contributes the Kronecker powers `s^(x)p_s` and `a^(x)p_a` (a power of
//! zero contributes no coordinates). A reward hypothesis is an inner product
//! of simplex-constrained weights with the stacked features, negated for
//! cost-style models so that the nonnegative weights can express a
//! negative-definite quadratic objective.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Demonstration;

/// Tolerance for the simplex constraint at construction.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

/// One polynomial feature block: `(s^(x)state_power ; a^(x)action_power)`.
/// A zero power means the block is absent and contributes no coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureTerm {
    state_power: u32,
    action_power: u32,
}

impl FeatureTerm {
    pub fn new(state_power: u32, action_power: u32) -> Result<Self> {
        if state_power == 0 && action_power == 0 {
            return Err(Error::EmptyFeatureTerm);
        }
        Ok(Self {
            state_power,
            action_power,
        })
    }

    pub fn state_power(&self) -> u32 {
        self.state_power
    }

    pub fn action_power(&self) -> u32 {
        self.action_power
    }

    /// Coordinates this term contributes for the given dimensions.
    pub fn output_dim(&self, state_dim: usize, action_dim: usize) -> usize {
        let s = if self.state_power > 0 {
            state_dim.pow(self.state_power)
        } else {
            0
        };
        let a = if self.action_power > 0 {
            action_dim.pow(self.action_power)
        } else {
            0
        };
        s + a
    }
}

/// `v (x) v (x) ... (x) v`, `power` times; unsymmetrized, so `s (x) s` keeps
/// both cross terms, matching a `vec(Q)` parameterization.
fn kron_power(v: &DVector<f64>, power: u32) -> DVector<f64> {
    debug_assert!(power >= 1);
    let mut out = v.clone();
    for _ in 1..power {
        let mut next = DVector::zeros(out.len() * v.len());
        for i in 0..out.len() {
            for j in 0..v.len() {
                next[i * v.len() + j] = out[i] * v[j];
            }
        }
        out = next;
    }
    out
}

/// One candidate reward-function class: an ordered list of feature terms
/// over fixed state/action dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisClass {
    index: usize,
    terms: Vec<FeatureTerm>,
    state_dim: usize,
    action_dim: usize,
    cost_model: bool,
}

impl HypothesisClass {
    pub fn new(
        index: usize,
        terms: Vec<FeatureTerm>,
        state_dim: usize,
        action_dim: usize,
        cost_model: bool,
    ) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::EmptyHypothesisClass { index });
        }
        Ok(Self {
            index,
            terms,
            state_dim,
            action_dim,
            cost_model,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn terms(&self) -> &[FeatureTerm] {
        &self.terms
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Whether reward values are negated inner products (cost convention).
    pub fn is_cost_model(&self) -> bool {
        self.cost_model
    }

    /// `-1` for cost models, `+1` otherwise.
    pub fn sign(&self) -> f64 {
        if self.cost_model {
            -1.0
        } else {
            1.0
        }
    }

    /// Total feature dimension over all terms.
    pub fn total_dim(&self) -> usize {
        self.terms
            .iter()
            .map(|t| t.output_dim(self.state_dim, self.action_dim))
            .sum()
    }

    /// The feature block of a single term.
    pub fn eval_term(
        &self,
        term: &FeatureTerm,
        state: &DVector<f64>,
        action: &DVector<f64>,
    ) -> DVector<f64> {
        let dim = term.output_dim(self.state_dim, self.action_dim);
        let mut out = DVector::zeros(dim);
        let mut offset = 0;
        if term.state_power() > 0 {
            let block = kron_power(state, term.state_power());
            out.rows_mut(offset, block.len()).copy_from(&block);
            offset += block.len();
        }
        if term.action_power() > 0 {
            let block = kron_power(action, term.action_power());
            out.rows_mut(offset, block.len()).copy_from(&block);
        }
        out
    }

    fn check_dims(&self, state: &DVector<f64>, action: &DVector<f64>) -> Result<()> {
        if state.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                context: "feature state",
                expected: self.state_dim,
                actual: state.len(),
            });
        }
        if action.len() != self.action_dim {
            return Err(Error::DimensionMismatch {
                context: "feature action",
                expected: self.action_dim,
                actual: action.len(),
            });
        }
        Ok(())
    }

    /// Stacked feature vector over all terms.
    pub fn eval_features(&self, state: &DVector<f64>, action: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dims(state, action)?;
        let mut out = DVector::zeros(self.total_dim());
        let mut offset = 0;
        for term in &self.terms {
            let block = self.eval_term(term, state, action);
            out.rows_mut(offset, block.len()).copy_from(&block);
            offset += block.len();
        }
        Ok(out)
    }

    /// Inner product of raw (not necessarily simplex) weights with the
    /// features, with the cost sign applied. The linearity and convexity
    /// properties of the risk are stated on this raw form.
    pub fn linear_reward(
        &self,
        omega: &DVector<f64>,
        state: &DVector<f64>,
        action: &DVector<f64>,
    ) -> Result<f64> {
        if omega.len() != self.total_dim() {
            return Err(Error::DimensionMismatch {
                context: "reward weights",
                expected: self.total_dim(),
                actual: omega.len(),
            });
        }
        Ok(self.sign() * self.eval_features(state, action)?.dot(omega))
    }

    /// True when every term of `self` appears in `other` (prefix or subset),
    /// the structural form of class nesting.
    pub fn terms_subset_of(&self, other: &HypothesisClass) -> bool {
        self.terms.iter().all(|t| other.terms.contains(t))
    }
}

/// Simplex-constrained weights for one hypothesis class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RewardParamsRepr", into = "RewardParamsRepr")]
pub struct RewardParams {
    class_index: usize,
    omega: DVector<f64>,
}

/// Wire form of [`RewardParams`]: a plain weight array, validated on the
/// way back in.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RewardParamsRepr {
    class_index: usize,
    omega: Vec<f64>,
}

impl From<RewardParams> for RewardParamsRepr {
    fn from(params: RewardParams) -> Self {
        Self {
            class_index: params.class_index,
            omega: params.omega.iter().copied().collect(),
        }
    }
}

impl TryFrom<RewardParamsRepr> for RewardParams {
    type Error = Error;

    fn try_from(repr: RewardParamsRepr) -> Result<Self> {
        RewardParams::new(repr.class_index, DVector::from_vec(repr.omega))
    }
}

impl RewardParams {
    /// Validates `omega >= 0` and `||omega||_1 = 1` within
    /// [`SIMPLEX_TOLERANCE`].
    pub fn new(class_index: usize, omega: DVector<f64>) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::InvalidArgument("weights must be non-empty".into()));
        }
        let min = omega.min();
        let l1: f64 = omega.iter().map(|w| w.abs()).sum();
        let violation = (-min).max((l1 - 1.0).abs());
        if !violation.is_finite() || violation > SIMPLEX_TOLERANCE {
            return Err(Error::NotOnSimplex { violation });
        }
        Ok(Self { class_index, omega })
    }

    pub fn class_index(&self) -> usize {
        self.class_index
    }

    pub fn omega(&self) -> &DVector<f64> {
        &self.omega
    }
}

/// An ordered set of candidate classes with indices `1..=C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    classes: Vec<HypothesisClass>,
}

impl HypothesisSet {
    pub fn new(classes: Vec<HypothesisClass>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::InvalidArgument(
                "hypothesis set must contain at least one class".into(),
            ));
        }
        for (i, class) in classes.iter().enumerate() {
            if class.index() != i + 1 {
                return Err(Error::MisorderedHypothesisSet);
            }
        }
        Ok(Self { classes })
    }

    pub fn classes(&self) -> &[HypothesisClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Reward value of a hypothesis: the signed inner product of the weights
/// with the stacked features.
pub fn reward_eval(
    class: &HypothesisClass,
    params: &RewardParams,
    state: &DVector<f64>,
    action: &DVector<f64>,
) -> Result<f64> {
    if params.class_index() != class.index() {
        return Err(Error::ClassMismatch {
            class: class.index(),
            params: params.class_index(),
        });
    }
    class.linear_reward(params.omega(), state, action)
}

/// Per-term feature bounds at one timestep: for each term `p`, the maximum
/// over trajectories of the Euclidean norm of that term's block on the
/// `(s_k, a_k)` slice of the demonstration.
pub fn feature_bound(
    class: &HypothesisClass,
    demo: &Demonstration,
    k: usize,
) -> Result<Vec<f64>> {
    let horizon = demo.horizon();
    if k >= horizon {
        return Err(Error::TimestepOutOfRange { k, horizon });
    }
    let mut bounds = vec![0.0f64; class.terms().len()];
    for traj in demo.trajectories() {
        let s = &traj.states()[k];
        let a = &traj.actions()[k];
        class.check_dims(s, a)?;
        for (p, term) in class.terms().iter().enumerate() {
            let norm = class.eval_term(term, s, a).norm();
            if norm > bounds[p] {
                bounds[p] = norm;
            }
        }
    }
    Ok(bounds)
}

/// The built-in five-class polynomial hierarchy used by the LQR experiments:
/// degree-1 features, then state-only and state/action quadratics, then
/// state-only and state/action cubics. All classes use the cost convention.
pub fn default_lqr_classes(state_dim: usize, action_dim: usize) -> HypothesisSet {
    let t = |s, a| FeatureTerm::new(s, a).expect("positive power");
    let classes = vec![
        (1, vec![t(1, 1)]),
        (2, vec![t(1, 1), t(2, 0)]),
        (3, vec![t(1, 1), t(2, 2)]),
        (4, vec![t(1, 1), t(2, 2), t(3, 0)]),
        (5, vec![t(1, 1), t(2, 2), t(3, 3)]),
    ]
    .into_iter()
    .map(|(index, terms)| {
        HypothesisClass::new(index, terms, state_dim, action_dim, true).expect("non-empty terms")
    })
    .collect();
    HypothesisSet::new(classes).expect("indices in order")
}
