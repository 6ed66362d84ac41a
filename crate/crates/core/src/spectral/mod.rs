//! Coarse-grained Airy sector: similarity transform of the drift–diffusion
//! operator, the quadratic Airy operator with Dirichlet walls, its
//! biorthogonal eigenmodes, and mode-sum correlators.

use num_complex::Complex64;
use thiserror::Error;

use crate::kernel::KernelError;
use crate::solvers::SolverError;

pub mod airy;
pub mod eigen;
pub mod expm;
pub mod modesum;
pub mod operator;
pub mod transform;

pub use airy::{airy_ai, airy_length, airy_profile, airy_zeros};
pub use eigen::{biorthogonal_eigs, biorthogonal_eigs_general, EigenPairs, SpectralSector};
pub use expm::{expm, propagate_covariance_oracle, ORACLE_MAX_N};
pub use modesum::{mode_sum_correlator, mode_sum_matrix, mode_sum_matrix_with, project_covariance, ModeCovariance, ModeSumPath};
pub use operator::{build_airy_operator, calibrate_airy_params, linear_potential_slope, AiryCalibration, AiryOperator, AiryParams};
pub use transform::{similarity_transform, TransformPair};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("singular transform: D = {value} at xi = {xi}")]
    SingularTransform { xi: f64, value: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("near-degenerate eigenvalue cluster {cluster:?}")]
    Degeneracy { cluster: Vec<Complex64> },
    #[error("mode {mode}: residual {residual:e} exceeds the bound")]
    Residual { mode: usize, residual: f64 },
    #[error("dense oracle limited to n <= {max}, got {n}")]
    OracleSize { n: usize, max: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}
