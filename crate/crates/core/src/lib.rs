//! Simulation and analysis of assignment-and-appraisal team dynamics.
//!
//! Team members hold row-stochastic appraisal weights of one another and share
//! a unit workload. Appraisals follow replicator dynamics driven by member
//! performance; workload flows along the appraisal network. The crate
//! integrates the full and reduced models, computes optimal workloads and
//! equilibrium appraisal matrices, evaluates Lyapunov functions, and runs the
//! Monte Carlo and member-switching experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::result_large_err)]

pub mod analysis;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod integrator;
mod quadrature;
pub mod types;

pub use dynamics::{ReducedState, WorkFlowKind};
pub use error::{AsapError, Result};
pub use integrator::{IntegratorOptions, Trajectory};
pub use types::{AppraisalMatrix, PerformanceProfile, PowerLaw, TeamMetric, TeamState, WorkloadVector};
