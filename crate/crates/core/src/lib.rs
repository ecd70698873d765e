//! Goal-conditioned DDPG with hindsight experience replay for a kinematic
//! pick-and-place arm, with sparse and dense reward variants.

// negated float comparisons are how validation rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod armsim;
pub mod diffnet;
pub mod error;
pub mod harness;
pub mod replay;
pub mod rewards;

pub use error::{Error, Result};
