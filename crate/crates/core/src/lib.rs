//! Exact tabular laboratory for learning from emergency-stop interventions.
//!
//! The crate covers maximum-entropy RL on finite MDPs, residual soft
//! Q-learning against a prior policy, the e-stop rollout protocol, the
//! residual intervention fine-tuning loop with its unregularized baseline,
//! numerical checks of the underlying gradient identities, and a seeded
//! experiment harness for gridworlds.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod intervention;
pub mod maxent;
pub mod mdp;
pub mod random;
pub mod rng;
pub mod rift;
pub mod rql;
pub mod table;
pub mod theory;

pub use error::{Error, Result};
