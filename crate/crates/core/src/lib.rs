//! Simulation and analysis of a two-queue polling system under two-phase
//! switching policies.
//!
//! The [`engine`] module simulates the system, [`analysis`] gives the fluid
//! fixed point and drift of the Palm chain, [`oracle`] solves small
//! truncated CTMCs exactly and [`sweep`] explores the policy space.

// `!(x > 0.0)` style checks are kept so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod oracle;
pub mod policy;
pub mod stochastic;
pub mod sweep;

pub use config::{Horizon, System, SystemConfig};
pub use policy::{PolicyParams, Queue};
pub use stochastic::DistributionSpec;
