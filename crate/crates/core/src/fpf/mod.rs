//! Feedback particle filters for the collective filtering problem.
//!
//! Particles are never weighted or resampled. Each one is pushed by a
//! feedback term built from the aggregate innovation, with gains chosen so
//! that the particles' law follows the collective filter.
//!
//! * [`lg_fpf_step`]: linear-Gaussian case with the exact gain
//!   `K = Σ̄ Hᵀ / σ_w²`, `u = 0`.
//! * [`constant_gain_fpf_step`]: general drift/diffusion and observation
//!   function with the constant-gain closure of the gain equations.
//! * [`finite_fpf_step`]: finite-state chain driven by time-modulated
//!   Poisson jumps.
//! * [`collective_wonham_step`]: the exact collective filter on the simplex
//!   that the finite-state FPF approximates.

mod euclidean;
mod finite;

pub use euclidean::{
    constant_gain_fpf_step, constant_gain_state, empirical_moments, lg_fpf_step, Dynamics, EuclideanEnsemble, GainMode, GainState,
};
pub use finite::{collective_wonham_step, finite_fpf_step, FiniteEnsemble, FiniteGain};
