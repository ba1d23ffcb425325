//! Reward-model selection for inverse reinforcement learning (IRL) via
//! structural risk minimization (SRM).
//!
//! Given expert demonstrations from a linear-quadratic control task, this
//! crate estimates policy gradients from the data (the empirical risk of a
//! candidate reward function), bounds the Rademacher complexity of each
//! candidate reward class (the model penalty), and selects the class that
//! minimizes the structural risk: empirical risk plus twice the penalty.
//!
//! The pieces:
//!
//! - [`mdp`]: deterministic linear dynamics, Gaussian linear policies,
//!   trajectory rollout and demonstration sampling.
//! - [`features`]: polynomial feature maps, linear weighted-sum rewards on
//!   the unit simplex, and the built-in five-class hypothesis hierarchy.
//! - [`learning`]: REINFORCE-with-baseline forward training (to create an
//!   expert) and maximum-likelihood gain recovery from demonstrations.
//! - [`risk`]: per-trajectory policy-gradient estimates and the empirical
//!   risk of a reward hypothesis on a demonstration.
//! - [`erm`]: projected-gradient empirical risk minimization over the unit
//!   simplex within one hypothesis class.
//! - [`complexity`]: Rademacher complexity bounds, a Monte-Carlo empirical
//!   Rademacher oracle, and generalization bound diagnostics.
//! - [`srm`]: structural risk assembly and the model-selection loop.
//! - [`dataset`]: plain-text demonstration persistence with exact
//!   round-tripping.

pub mod complexity;
pub mod dataset;
pub mod erm;
pub mod error;
pub mod features;
pub mod learning;
pub mod mdp;
pub mod risk;
pub mod seeding;
pub mod srm;

pub use error::{Error, Result};
