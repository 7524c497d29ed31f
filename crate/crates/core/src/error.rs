//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("transition row (s={state}, a={action}) sums to {sum} instead of 1")]
    TransitionRowSum {
        state: usize,
        action: usize,
        sum: f64,
    },

    #[error("negative transition probability at (s={state}, a={action}, s'={next})")]
    NegativeProbability {
        state: usize,
        action: usize,
        next: usize,
    },

    #[error("reward {value} at (s={state}, a={action}) outside [0, 1]")]
    RewardOutOfRange {
        state: usize,
        action: usize,
        value: f64,
    },

    #[error("discount factor {0} outside [0, 1)")]
    GammaOutOfRange(f64),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("invalid policy row {state}: {reason}")]
    PolicyRow { state: usize, reason: String },

    #[error(
        "policy entry (s={state}, a={action}) is zero; operation needs strictly positive rows"
    )]
    ZeroPolicyEntry { state: usize, action: usize },

    #[error("regularization mismatch: table tagged {found:?}, operation expects {requested:?}")]
    TauMismatch {
        found: Option<f64>,
        requested: Option<f64>,
    },

    #[error("tau must be strictly positive, got {0}")]
    TauNonPositive(f64),

    #[error("non-finite input in {0}")]
    NonFinite(String),

    #[error("linear system is singular; with gamma < 1 this signals numeric corruption")]
    SingularSystem,

    #[error("value iteration stalled at residual {residual:e} after {iters} iterations")]
    NonConvergence { iters: usize, residual: f64 },

    #[error("unknown check name `{0}`")]
    UnknownCheck(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error in {what}: {detail}")]
    Parse { what: String, detail: String },
}
