//! One-body Lindblad embedding of the log-size jump generator, restricted
//! to diagonal density matrices.
//!
//! Each grid offset `d` gets a shift operator `L_d |j⟩ = √(λ_j c_d) |j − d⟩`
//! with the same hat weights `c_d` as the master-equation solver. Targets
//! below the grid are virtual nodes whose population is reported as a
//! single leak row.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::LogGrid;
use crate::kernel::KernelError;
use crate::process::LogJumpProcess;
use crate::solvers::{DiscreteJumpKernel, SolverError};

/// Largest grid for which dense generators are assembled.
pub const MAX_DENSE_N: usize = 256;
pub const EQUIVALENCE_TOL: f64 = 1e-12;
pub const OFFDIAG_TOL: f64 = 1e-14;
pub const TRACE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LindbladError {
    #[error("dense generator limited to n <= {max}, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// `(n + 1) × n` generator on grid densities; row `n` collects the rate of
/// mass leaving through the left edge.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    pub grid: LogGrid,
    pub matrix: DMatrix<f64>,
}

impl GeneratorMatrix {
    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.matrix.column_iter().map(|c| c.iter().sum()).collect()
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        (&self.matrix * nalgebra::DVector::from_column_slice(p)).iter().cloned().collect()
    }
}

struct Discretisation {
    rates: Vec<f64>,
    kernel: DiscreteJumpKernel,
}

fn discretise(process: &LogJumpProcess, grid: &LogGrid) -> Result<Discretisation, LindbladError> {
    if grid.n > MAX_DENSE_N {
        return Err(LindbladError::TooLarge { n: grid.n, max: MAX_DENSE_N });
    }
    let rates = grid
        .nodes()
        .into_iter()
        .map(|xi| process.rate_at(xi))
        .collect::<Result<Vec<_>, _>>()?;
    let kernel = DiscreteJumpKernel::new(&process.jumps, grid.dx())?;
    Ok(Discretisation { rates, kernel })
}

/// Loss `−λ_j` on the diagonal, gain `λ_j c_d` at `j − d`.
pub fn build_jump_generator_matrix(process: &LogJumpProcess, grid: &LogGrid) -> Result<GeneratorMatrix, LindbladError> {
    let Discretisation { rates, kernel } = discretise(process, grid)?;
    let n = grid.n;
    let mut g = DMatrix::zeros(n + 1, n);
    for j in 0..n {
        g[(j, j)] -= rates[j];
        for d in 0..=kernel.max_offset() {
            let rate = rates[j] * kernel.weight(d);
            if d <= j {
                g[(j - d, j)] += rate;
            } else {
                g[(n, j)] += rate;
            }
        }
    }
    Ok(GeneratorMatrix { grid: *grid, matrix: g })
}

/// Sparse density matrix on the grid extended by virtual nodes `< 0`.
type Sparse = BTreeMap<(isize, isize), f64>;

/// Jump operators `L_d`, stored as their amplitudes `√(λ_j c_d)`.
pub struct JumpOperators {
    amplitudes: Vec<Vec<f64>>,
    rates: Vec<f64>,
}

impl JumpOperators {
    pub fn new(process: &LogJumpProcess, grid: &LogGrid) -> Result<Self, LindbladError> {
        let Discretisation { rates, kernel } = discretise(process, grid)?;
        let amplitudes = (0..=kernel.max_offset())
            .map(|d| rates.iter().map(|r| (r * kernel.weight(d)).sqrt()).collect())
            .collect();
        Ok(Self { amplitudes, rates })
    }

    fn n(&self) -> usize {
        self.rates.len()
    }

    /// `Σ_d L_d ρ L_d† − ½{L_d†L_d, ρ}` for `ρ` supported on grid nodes.
    fn dissipator(&self, rho: &Sparse) -> Sparse {
        let mut out = Sparse::new();
        for (&(i, k), &value) in rho {
            let (iu, ku) = (i as usize, k as usize);
            for (d, amp) in self.amplitudes.iter().enumerate() {
                let d = d as isize;
                let v = amp[iu] * amp[ku] * value;
                if v != 0.0 {
                    *out.entry((i - d, k - d)).or_insert(0.0) += v;
                }
                // L_d†L_d = diag(λ_j c_d).
                let anti = -0.5 * (amp[iu] * amp[iu] + amp[ku] * amp[ku]) * value;
                if anti != 0.0 {
                    *out.entry((i, k)).or_insert(0.0) += anti;
                }
            }
        }
        out
    }

    /// Anticommutator part alone on a diagonal state.
    pub fn anticommutator_diagonal(&self) -> Vec<f64> {
        (0..self.n())
            .map(|j| -self.amplitudes.iter().map(|a| a[j] * a[j]).sum::<f64>())
            .collect()
    }
}

fn largest_offdiag(s: &Sparse) -> f64 {
    s.iter().filter(|((i, k), _)| i != k).map(|(_, v)| v.abs()).fold(0.0, f64::max)
}

/// Diagonal-restricted Lindblad action together with the largest
/// off-diagonal entry generated from any diagonal basis state.
pub fn build_lindblad_diagonal_action(process: &LogJumpProcess, grid: &LogGrid) -> Result<(GeneratorMatrix, f64), LindbladError> {
    let ops = JumpOperators::new(process, grid)?;
    let n = grid.n;
    let mut g = DMatrix::zeros(n + 1, n);
    let mut offdiag: f64 = 0.0;
    for j in 0..n {
        let rho = Sparse::from([((j as isize, j as isize), 1.0)]);
        let out = ops.dissipator(&rho);
        offdiag = offdiag.max(largest_offdiag(&out));
        for ((i, k), v) in out {
            if i == k {
                let row = if i < 0 { n } else { i as usize };
                g[(row, j)] += v;
            }
        }
    }
    Ok((GeneratorMatrix { grid: *grid, matrix: g }, offdiag))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LindbladReport {
    pub grid_size: usize,
    pub max_abs_difference: f64,
    pub max_offdiag: f64,
    pub trace_defect: f64,
    pub pass: bool,
}

/// Compare the two generators and run the diagonal-invariance and trace
/// checks on a full diagonal state.
pub fn check_lindblad(process: &LogJumpProcess, grid: &LogGrid) -> Result<LindbladReport, LindbladError> {
    let jump = build_jump_generator_matrix(process, grid)?;
    let (lind, basis_offdiag) = build_lindblad_diagonal_action(process, grid)?;
    let max_abs_difference = (&jump.matrix - &lind.matrix).abs().max();

    let ops = JumpOperators::new(process, grid)?;
    let n = grid.n;
    let rho: Sparse = (0..n).map(|j| ((j as isize, j as isize), 1.0 + (j as f64 * 0.7).sin().abs())).collect();
    let out = ops.dissipator(&rho);
    let max_offdiag = basis_offdiag.max(largest_offdiag(&out));
    let trace: f64 = out.iter().filter(|((i, k), _)| i == k).map(|(_, v)| v).sum();
    let scale: f64 = rho.values().zip(&ops.rates).map(|(p, r)| p * r).sum::<f64>().max(1.0);
    let trace_defect = trace.abs() / scale;

    Ok(LindbladReport {
        grid_size: n,
        max_abs_difference,
        max_offdiag,
        trace_defect,
        pass: max_abs_difference <= EQUIVALENCE_TOL && max_offdiag <= OFFDIAG_TOL && trace_defect <= TRACE_TOL,
    })
}
