//! Pure-breakage fragmentation in log-size coordinates.
//!
//! Deterministic solvers (sectional PBE, log-size master equation,
//! Fokker–Planck reduction), exact Monte Carlo for the tagged-mass walk and
//! the branching cascade, the Airy spectral sector, and the Lindblad
//! diagonal-sector check.

// `!(x > 0.0)` is used throughout to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use thiserror::Error;

pub mod branching;
pub mod correlation;
pub mod fenwick;
pub mod grid;
pub mod jump_law;
pub mod kernel;
pub mod lindblad;
pub mod process;
pub mod quadrature;
pub mod seeding;
pub mod solvers;
pub mod spectral;
pub mod tagged;

pub use branching::{simulate_branching, simulate_runs, BranchingControls, BranchingError, ParticlePopulation};
pub use correlation::CorrelationEstimate;
pub use grid::{compare_densities, DensityComparison, GridError, GridField, LeftBoundary, LogGrid};
pub use jump_law::LogJumpLaw;
pub use kernel::{validate_daughter_law, BreakageRate, DaughterLaw, HomogeneousKernel, KernelError, ValidationReport};
pub use lindblad::{check_lindblad, LindbladError, LindbladReport};
pub use process::LogJumpProcess;
pub use solvers::SolverError;
pub use spectral::SpectralError;
pub use tagged::{simulate_ensemble, simulate_tagged, EnsembleSpec, InitialLogSize, SimulationError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Branching(#[from] BranchingError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Lindblad(#[from] LindbladError),
}
