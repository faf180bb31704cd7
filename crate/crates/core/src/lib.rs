//! Fisher-information sensing at the localization transition of quasi-periodic
//! fermion lattices.
//!
//! The crate builds Aubry-André-Harper rings on Fibonacci approximants, solves them
//! exactly as free fermions (or by exact diagonalization for small interacting rings),
//! and estimates quantum, classical and observable Fisher information for adiabatic and
//! sudden-quench protocols. [`analysis`] turns the resulting scans into peaks and
//! power-law fits; [`experiments`] chains everything into reusable pipelines.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod freefermion;
pub mod manybody;
pub mod metrology;
pub mod model;

mod par;

/// Library version; part of every cache key downstream.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use freefermion::{
    correlation_matrix, diagonalize, ground_state, negative_energy_count, slater_fidelity,
    slater_overlap, CorrelationMatrix, SlaterState, SpectralDecomposition,
};
pub use metrology::{
    adiabatic_sweep, FdConfig, FisherPoint, LinearObservable, MeasurementModel,
};
pub use model::{build_hamiltonian, LatticeSpec, OmegaConvention, SingleParticleHamiltonian};
