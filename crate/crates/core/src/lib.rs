//! Dynamics of a single target instantaneous eigenstate of a time-dependent
//! Hamiltonian, written as a closed integro-differential equation, together
//! with the machinery to study how dephasing white noise restores or creates
//! adiabatic following.
//!
//! The crate is organised bottom-up:
//!
//! * [`models`]: the Hamiltonian catalog (generic qubit, linear sweep,
//!   rotating-field qubit, two coupled qubits mapped to one).
//! * [`eigenframe`]: instantaneous eigenpairs, non-adiabatic couplings and
//!   accumulated phases.
//! * [`noise`]: seeded white-noise realizations and their averaged
//!   dephasing factor.
//! * [`kernel`]: the memory kernel of the one-component equation.
//! * [`solver`]: Volterra, auxiliary-ODE and full-component integrators.
//! * [`ensemble`]: Monte Carlo averaging, density matrices and summary
//!   metrics.
//! * [`experiments`]: configuration files, CSV output and parameter scans
//!   behind the `adiabat` command line tool.

pub mod eigenframe;
pub mod ensemble;
mod error;
pub mod experiments;
pub mod grid;
pub mod kernel;
pub mod models;
pub mod noise;
pub mod solver;

pub use error::{Error, Result};
pub use grid::Grid;

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex64;
