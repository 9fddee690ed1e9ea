use thiserror::Error;

use crate::model::State;

/// Errors raised by the solvers, the index algorithms and the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or argument is outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("state {state} is not valid for d_max = {d_max}")]
    InvalidState { state: State, d_max: usize },

    /// A policy or loop produced a shape the theory rules out.
    #[error("structural error: {0}")]
    Structural(String),

    /// A numerical routine hit a singular system, a negative probability or
    /// failed to converge.
    #[error("numerical error [{case}]: {message}")]
    Numerical { case: String, message: String },

    #[error("zeta is undefined: both policies have active time {active_time}")]
    UndefinedRatio { active_time: f64 },

    #[error("capacity exceeded: {needed} joint states > cap {cap}")]
    Capacity { needed: u128, cap: u128 },

    /// A caller broke an operation's contract (e.g. channel budget).
    #[error("contract violated: {0}")]
    Contract(String),
}

impl Error {
    pub(crate) fn numerical(case: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Numerical {
            case: case.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
