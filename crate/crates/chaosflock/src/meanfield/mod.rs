//! Mean-field side of the lab: the kinetic finite-volume solver, the density
//! force evaluator, and the sampled McKean-Vlasov proxy.

pub mod force;
pub mod grid;
pub mod proxy;
pub mod solver;
pub mod stability;

pub use force::{DensityForceField, ForceSource};
pub use grid::{PhaseDensity, PhaseGrid};
pub use proxy::{nonlinear_sde_proxy, ProxyTrajectory};
pub use solver::{cfl_limit, solve_kinetic, vfp_step, GridError, KineticSolution, NormLedger};
pub use stability::{stability_experiment, StabilityOutput, StabilityReport};
