//! Collective filtering for many anonymous agents.
//!
//! `M` non-interacting agents share a model and emit observations whose
//! labels are discarded. Instead of solving the association problem, the
//! filters here track the empirical distribution of the agents' hidden
//! states from aggregate statistics of the observations:
//!
//! * [`collective_hmm`]: discrete-time collective Bayes update for finite
//!   state and observation spaces, with a KL-projection oracle.
//! * [`collective_kalman`]: collective Kalman-Bucy filter (continuous time)
//!   and its discrete-time counterpart, plus the classical per-agent filter.
//! * [`fpf`]: feedback particle filters whose particle law follows the
//!   collective filter (Euclidean and finite-state), and the exact
//!   collective Wonham filter on the simplex.
//! * [`models`] and [`aggregate`]: generative models, ground-truth agent
//!   simulation, and the per-step aggregate observation statistics.
//!
//! The crate is `no_std` and needs only `alloc`. IO, configuration and the
//! experiment driver live in the `collective-fpf` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod aggregate;
pub mod belief;
pub mod collective_hmm;
pub mod collective_kalman;
mod error;
pub mod fpf;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod rng;

pub use aggregate::{AggregateStats, EmpiricalSymbolDistribution};
pub use belief::{GaussianBelief, SimplexBelief};
pub use error::{Error, Result};
pub use models::{AgentEnsemble, AgentPath, FiniteStateModel, HmmEnsemble, HmmModel, LinearGaussianModel};

/// Re-exported so downstream crates use the same matrix types.
pub use nalgebra::{DMatrix, DVector};
