//! Q-learning with linear function approximation: MDP primitives, feature
//! maps and projections, the target-network and truncation algorithms,
//! analytical oracles, built-in environments and an experiment harness.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod envs;
pub mod harness;
pub mod error;
pub mod linear_fa;
pub mod mdp;
pub mod oracles;

pub use algorithms::{Algo, AlgoConfig, RunLog};
pub use envs::Environment;
pub use error::{Error, Result};
pub use linear_fa::{FeatureMap, StateActionWeights};
pub use mdp::{Mdp, Policy, QVector};
