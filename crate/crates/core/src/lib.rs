//! Input-to-state stability toolbox.
//!
//! Simulate nonlinear systems `ẋ = f(x, u)` under piecewise right-continuous
//! inputs, falsify ISS-type estimates by sampling, check ISS Lyapunov
//! certificates, simulate event-triggered controllers and certify finite or
//! truncated infinite networks through small-gain conditions.
//!
//! Probes in this crate are falsification tools: a report of
//! `no_counterexample` means that no violation was found within the sampling
//! budget, not that the property has been proven.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builtins;
pub mod comparison;
pub mod dynamics;
pub mod etc;
pub mod lyapunov;
pub mod probe;
pub mod sampling;
pub mod scenario;
pub mod smallgain;

pub use comparison::{ComparisonError, ComparisonFn, KLFn, Kind};
pub use dynamics::{
    integrate, InputSignal, IntegrationOptions, Norm, SystemModel, Trajectory, TrajectoryStatus,
};
pub use probe::{IssEstimate, ProbeReport, Property, SamplingBudget, Verdict, Witness};
