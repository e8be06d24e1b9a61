//! Small-gain certification of interconnections: the two-system cyclic
//! condition, its operator form, the max-type gain operator of a network,
//! paths of strict decay, and the composite Lyapunov function of a
//! truncated network.

use thiserror::Error;

use crate::comparison::ComparisonError;
use crate::dynamics::DynamicsError;
use crate::lyapunov::LyapunovError;
use crate::probe::ProbeError;

mod network;
mod operator;
mod path;
mod two;

pub use network::*;
pub use operator::*;
pub use path::*;
pub use two::*;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmallGainError {
    #[error(transparent)]
    Comparison(#[from] ComparisonError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid request: {0}")]
    Invalid(String),
}
