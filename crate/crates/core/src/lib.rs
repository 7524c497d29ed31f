//! Exact policy-optimization laboratory for tabular MDPs.
//!
//! Everything here works with exact policy evaluation (direct linear solves,
//! no sampling). The crate provides:
//!
//! - [`mdp`]: the MDP/distribution types, validation, seeded problem
//!   generators, and the on-disk MDP format;
//! - [`eval`]: the dynamic-programming backbone (Bellman and soft-Bellman
//!   operators, optimal values, visitation measures, advantage gaps);
//! - [`algo`] and [`schedule`]: one-step update rules for PI, projected
//!   policy gradient, softmax PG/NPG, their entropy-regularized variants,
//!   soft policy iteration, and the step-size rules they use;
//! - [`diag`] and [`rate`]: per-iteration verification of the improvement
//!   identities and bounds each method satisfies, plus empirical
//!   convergence-rate fits;
//! - [`run`]: the experiment driver that produces verified traces.

pub mod algo;
pub mod diag;
pub mod error;
pub mod eval;
pub mod mdp;
pub mod policy;
pub mod rate;
pub mod rng;
pub mod run;
pub mod schedule;
pub mod simplex;
pub mod util;

pub use error::{Error, Result};
pub use mdp::{random_mdp, two_arm_bandit, validate_mdp, DistributionOverStates, TabularMdp};
pub use policy::{Policy, TOL_GAP};
pub use simplex::project_simplex;
