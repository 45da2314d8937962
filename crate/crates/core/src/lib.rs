//! Positive-P stochastic simulation of a two-level atom coupled to quantized cavity modes.
//!
//! The crate provides the phase-space SDE (drift, diffusion and noise for the full-wave
//! Jaynes-Cummings model with Lindblad dissipation), the change of variables to stochastic
//! Maxwell-Bloch form, a truncated-Fock master-equation reference, a deterministic
//! Maxwell-Bloch solver, and the configuration and CSV plumbing around them.

pub mod basis;
pub mod changed_vars;
pub mod config;
pub mod error;
pub mod init;
pub mod invariants;
pub mod mb;
pub mod model;
pub mod observables;
pub mod reference;
pub mod runner;
pub mod sde;

pub use basis::{BasisFamily, BasisValues};
pub use error::{Error, Result};
pub use init::{init_points, AtomicDensity, InitDistribution, InitPoint};
pub use sde::{run_ensemble, simulate_path, EnsembleOptions, EnsembleResult, SdeSystem, TimeGrid};
pub use model::{JcSystem, ModelParams, PhaseState};
