//! Experience-aware warm starting for multi-objective pipeline search.
//!
//! The crate keeps a persistent store of past pipeline evaluations (successes
//! and failures, each annotated with task meta-features and a hardware
//! profile) and uses it to bias a probabilistic sampler over a mixed
//! discrete/continuous configuration space before a new search begins.
//! Positive experiences pull the sampling distribution toward regions that
//! worked; negative ones push it away from dead ends; both are weighted by
//! task similarity and (for positives) a utility score.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod meta;
pub mod prior;
pub mod search;
pub mod space;
pub mod store;
pub mod surrogate;

pub use error::{Error, Result};
