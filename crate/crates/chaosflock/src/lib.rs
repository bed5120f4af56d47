//! Desk-scale laboratory for stochastic velocity-alignment dynamics with
//! velocity-dependent sensitivity sets and truncated diffusion.
//!
//! The crate simulates the regularized interacting particle system, solves the
//! matching kinetic equation on a 1d phase-space grid, and measures the
//! Wasserstein gap between the two along ladders of particle counts. The
//! modules mirror that pipeline:
//!
//! - [`geometry`]: sensitivity sets `K(v)`, their boundary families `Theta(v)`,
//!   and the phase-space mollified indicator that smooths the interaction.
//! - [`sde`]: Euler-Maruyama integration of the particle system with
//!   speed-truncated noise and synchronous coupling support.
//! - [`meanfield`]: the kinetic finite-volume solver and the sampled
//!   McKean-Vlasov proxy used as the mean-field target.
//! - [`transport`]: exact 1-Wasserstein machinery (sorted 1d, assignment
//!   solver), the smoothed `W1^gamma` functional, and sampling-rate models.
//! - [`chaos`]: coupling experiments, rate fits, and the sqrt(N) discrepancy
//!   checks behind them.
//! - [`cli`]: config-driven experiment runner that writes CSV/JSON artifacts.

pub mod chaos;
pub mod cli;
pub mod config;
pub mod geometry;
pub mod meanfield;
pub mod rng;
pub mod sde;
pub mod transport;
