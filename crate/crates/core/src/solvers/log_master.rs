//! Exact log-size jump (master) equation
//!
//! ```text
//! ∂t p(ξ) = −λ(ξ) p(ξ) + ∫₀^∞ λ(ξ+u) K(u) p(ξ+u) du
//! ```
//!
//! on a uniform grid. A jump of length `u` from node `j` lands between two
//! nodes and its mass is split linearly between them, which gives offset
//! weights `c_d = ∫ K(u) φ(u − d·dx) du` with `φ` the unit hat function.
//! The weights sum to one, so every column of the discrete generator sums to
//! zero once jumps that land left of the grid are tallied as leaked mass.

use crate::grid::{GridField, LeftBoundary, LogGrid};
use crate::jump_law::LogJumpLaw;
use crate::process::LogJumpProcess;
use crate::quadrature::integrate;

use super::{enforce_nonnegative, rk4_step, step_schedule, Rk4Scratch, SolverError};

/// Density threshold at the right edge above which the grid is too small.
pub const RIGHT_EDGE_TOL: f64 = 1e-8;
/// Required normalisation of the initial condition.
pub const NORMALISATION_TOL: f64 = 1e-8;
/// Time step as a fraction of the fastest breakage time.
pub const RATE_CFL: f64 = 0.1;

/// Jump-offset weights on a grid of spacing `dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJumpKernel {
    pub dx: f64,
    /// `weights[d]`: probability that a jump moves mass by `d` cells.
    pub weights: Vec<f64>,
    /// `tail[j] = Σ_{d > j} weights[d]`: probability of leaving a grid whose
    /// left edge is `j` cells away.
    pub tail: Vec<f64>,
}

impl DiscreteJumpKernel {
    pub fn new(jumps: &LogJumpLaw, dx: f64) -> Result<Self, SolverError> {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(SolverError::Invalid(format!("grid spacing {dx}")));
        }
        let d_max = (jumps.u_max() / dx).ceil() as usize + 1;
        let tol = 1e-14;
        let mut weights = Vec::with_capacity(d_max + 1);
        weights.push(integrate(|u| jumps.density(u) * (1.0 - u / dx), 0.0, dx, tol)?.value);
        for d in 1..=d_max {
            let c = d as f64 * dx;
            let left = integrate(|u| jumps.density(u) * (u - (c - dx)) / dx, c - dx, c, tol)?.value;
            let right = integrate(|u| jumps.density(u) * ((c + dx) - u) / dx, c, c + dx, tol)?.value;
            weights.push(left + right);
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let mut tail = vec![0.0; weights.len()];
        for d in (0..weights.len() - 1).rev() {
            tail[d] = tail[d + 1] + weights[d + 1];
        }
        Ok(Self { dx, weights, tail })
    }

    pub fn max_offset(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn weight(&self, d: usize) -> f64 {
        self.weights.get(d).copied().unwrap_or(0.0)
    }

    /// Probability that a jump from `j` cells above the left edge leaves the grid.
    pub fn leak(&self, j: usize) -> f64 {
        self.tail.get(j).copied().unwrap_or(0.0)
    }
}

/// Precomputed right-hand side of the discrete master equation.
pub(crate) struct MasterOperator {
    rates: Vec<f64>,
    kernel: DiscreteJumpKernel,
    bc: LeftBoundary,
}

impl MasterOperator {
    pub(crate) fn new(process: &LogJumpProcess, grid: &LogGrid, bc: LeftBoundary) -> Result<Self, SolverError> {
        let rates = grid
            .nodes()
            .into_iter()
            .map(|xi| process.rate_at(xi))
            .collect::<Result<Vec<_>, _>>()?;
        let kernel = DiscreteJumpKernel::new(&process.jumps, grid.dx())?;
        Ok(Self { rates, kernel, bc })
    }

    pub(crate) fn max_rate(&self) -> f64 {
        self.rates.iter().cloned().fold(0.0, f64::max)
    }

    /// `out[..n]` = dp/dt, `out[n]` = d(leaked)/dt; `state` has the same layout.
    pub(crate) fn apply(&self, state: &[f64], out: &mut [f64], dx: f64) {
        let n = self.rates.len();
        let p = &state[..n];
        let w = &self.kernel.weights;
        let mut leak_rate = 0.0;
        for i in 0..n {
            out[i] = -self.rates[i] * p[i];
        }
        for j in 0..n {
            let flux = self.rates[j] * p[j];
            if flux == 0.0 {
                continue;
            }
            let reach = j.min(self.kernel.max_offset());
            for d in 0..=reach {
                out[j - d] += w[d] * flux;
            }
            leak_rate += self.kernel.leak(j) * flux;
        }
        match self.bc {
            LeftBoundary::AbsorbLeft => out[n] = leak_rate * dx,
            LeftBoundary::ReflectLeft => {
                out[0] += leak_rate;
                out[n] = 0.0;
            }
        }
    }
}

/// Integrate the master equation from `p0` over a duration `t`.
pub fn integrate_log_master(process: &LogJumpProcess, p0: &GridField, t: f64) -> Result<GridField, SolverError> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(SolverError::Invalid(format!("duration {t}")));
    }
    let total = p0.total_probability();
    if (total - 1.0).abs() > NORMALISATION_TOL {
        return Err(SolverError::NotNormalised(total));
    }
    let n = p0.grid.n;
    if p0.values[n - 1] > RIGHT_EDGE_TOL {
        return Err(SolverError::Domain(format!(
            "density {} at the right edge xi = {}",
            p0.values[n - 1],
            p0.grid.node(n - 1)
        )));
    }
    if t == 0.0 {
        return Ok(p0.clone());
    }
    let op = MasterOperator::new(process, &p0.grid, p0.bc)?;
    let (steps, dt) = step_schedule(t, RATE_CFL / op.max_rate());
    let dx = p0.grid.dx();
    let mut state = p0.values.clone();
    state.push(p0.leaked_mass);
    let mut scratch = Rk4Scratch::default();
    for _ in 0..steps {
        rk4_step(&mut state, dt, &mut scratch, |y, dy| op.apply(y, dy, dx));
        enforce_nonnegative(&mut state[..n])?;
    }
    let leaked_mass = state[n];
    state.truncate(n);
    Ok(GridField {
        grid: p0.grid,
        values: state,
        bc: p0.bc,
        leaked_mass,
    })
}
