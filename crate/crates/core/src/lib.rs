//! Whittle-index scheduling for query-aware age of information.
//!
//! Each node is an arm whose state is its age and whether a query is
//! pending. The crate provides the single-arm model, dynamic-programming
//! solvers used as ground truth, closed-form stationary analysis of
//! threshold policies, the index algorithms built on it, and a multi-node
//! scheduling simulator.

pub mod error;
pub mod model;
pub mod dp;
pub mod sim;
pub mod steady_state;
pub mod whittle;

pub use error::{Error, Result};
pub use model::{Action, State, StateDistribution, SubMdpParams, ThresholdPolicy};
