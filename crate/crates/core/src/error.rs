//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("(A, B) is not controllable: controllability matrix has rank {rank}, need {state_dim}")]
    NotControllable { rank: usize, state_dim: usize },

    #[error("discount factor must lie in [0, 1), got {0}")]
    InvalidDiscount(f64),

    #[error("exploration noise_std must be positive and finite, got {0}")]
    InvalidNoiseStd(f64),

    #[error("uniform box requires lower < upper in every coordinate")]
    InvalidBox,

    #[error("demonstration must contain at least one trajectory")]
    EmptyDemonstration,

    #[error("trajectory has {states} states and {actions} actions; need one more state than actions")]
    MalformedTrajectory { states: usize, actions: usize },

    #[error("feature term needs at least one positive power")]
    EmptyFeatureTerm,

    #[error("hypothesis class {index} has no feature terms")]
    EmptyHypothesisClass { index: usize },

    #[error("hypothesis set indices must run 1..=C in order")]
    MisorderedHypothesisSet,

    #[error("reward weights built for class {params} used with class {class}")]
    ClassMismatch { class: usize, params: usize },

    #[error("weights violate the unit simplex constraint by {violation:e}")]
    NotOnSimplex { violation: f64 },

    #[error("timestep {k} out of range for horizon {horizon}")]
    TimestepOutOfRange { k: usize, horizon: usize },

    #[error("state data is rank deficient: rank {rank} < required {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("training diverged at episode {episode}")]
    TrainingDiverged { episode: usize },

    #[error("objective became non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("confidence level delta must lie in (0, 1], got {0}")]
    InvalidDelta(f64),

    #[error("solving class {class_index} failed: {source}")]
    ClassSolve {
        class_index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("dataset I/O: {0}")]
    DatasetIo(#[from] std::io::Error),

    #[error("dataset parse error at line {line}: {message}")]
    DatasetParse { line: usize, message: String },

    #[error("{0}")]
    InvalidArgument(String),
}
