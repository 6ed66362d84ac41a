//! Drift–diffusion reduction `∂t p = −∂ξ(v p) + ∂ξ²(D p)` with
//! `v = −m₁λ`, `D = (m₂/2)λ`.
//!
//! Conservative central differences: the flux through the face between
//! nodes `i` and `i+1` is `v̄ (p_i + p_{i+1})/2 − (D_{i+1}p_{i+1} − D_i p_i)/dx`.
//! The right edge is closed; the left edge either absorbs (ghost density 0,
//! outflow tallied in `leaked_mass`) or reflects (zero flux).

use serde::{Deserialize, Serialize};

use crate::grid::{GridField, LeftBoundary, LogGrid};
use crate::kernel::BreakageRate;
use crate::process::LogJumpProcess;

use super::{enforce_nonnegative, rk4_step, step_schedule, Rk4Scratch, SolverError};

/// RK4 stability margins for the diffusive and advective limits.
const DIFFUSIVE_CFL: f64 = 0.25;
const ADVECTIVE_CFL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpCoefficients {
    pub grid: LogGrid,
    pub drift: Vec<f64>,
    pub diffusion: Vec<f64>,
}

impl FpCoefficients {
    pub fn new(grid: LogGrid, drift: Vec<f64>, diffusion: Vec<f64>) -> Result<Self, SolverError> {
        if drift.len() != grid.n || diffusion.len() != grid.n {
            return Err(SolverError::Invalid("coefficient length does not match the grid".into()));
        }
        if let Some(i) = diffusion.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(SolverError::Invalid(format!("diffusion {} at node {i}", diffusion[i])));
        }
        if drift.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Invalid("non-finite drift".into()));
        }
        Ok(Self { grid, drift, diffusion })
    }

    pub fn constant(grid: LogGrid, v: f64, d: f64) -> Result<Self, SolverError> {
        Self::new(grid, vec![v; grid.n], vec![d; grid.n])
    }

    /// `v = −m₁λ(ξ)`, `D = (m₂/2)λ(ξ)` on the grid nodes.
    pub fn from_moments(rate: &BreakageRate, m1: f64, m2: f64, grid: LogGrid) -> Result<Self, SolverError> {
        let mut drift = Vec::with_capacity(grid.n);
        let mut diffusion = Vec::with_capacity(grid.n);
        for xi in grid.nodes() {
            let lam = rate.at(xi)?;
            drift.push(-m1 * lam);
            diffusion.push(0.5 * m2 * lam);
        }
        Self::new(grid, drift, diffusion)
    }
}

/// Second-order moment truncation of the jump generator.
pub fn km_reduce(process: &LogJumpProcess, grid: &LogGrid) -> Result<FpCoefficients, SolverError> {
    FpCoefficients::from_moments(&process.rate, process.jumps.moment(1), process.jumps.moment(2), *grid)
}

/// Largest RK4 step inside the stability region of the scheme.
pub fn stable_step(coeffs: &FpCoefficients) -> f64 {
    let dx = coeffs.grid.dx();
    let d_max = coeffs.diffusion.iter().cloned().fold(0.0, f64::max);
    let v_max = coeffs.drift.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut dt = f64::INFINITY;
    if d_max > 0.0 {
        dt = dt.min(DIFFUSIVE_CFL * dx * dx / d_max);
    }
    if v_max > 0.0 {
        dt = dt.min(ADVECTIVE_CFL * dx / v_max);
    }
    dt
}

/// Time-step policy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy", content = "dt")]
pub enum FpStep {
    /// Largest stable step.
    #[default]
    Auto,
    /// Use `dt`, reducing it with a warning if it violates stability.
    Requested(f64),
    /// Use `dt` or fail with a step-size error.
    Strict(f64),
}

fn fp_rhs(coeffs: &FpCoefficients, bc: LeftBoundary, state: &[f64], out: &mut [f64]) {
    let n = coeffs.grid.n;
    let dx = coeffs.grid.dx();
    let (v, d) = (&coeffs.drift, &coeffs.diffusion);
    let p = &state[..n];
    let left = match bc {
        LeftBoundary::AbsorbLeft => v[0] * 0.5 * p[0] - d[0] * p[0] / dx,
        LeftBoundary::ReflectLeft => 0.0,
    };
    let mut prev = left;
    for i in 0..n {
        let next = if i + 1 < n {
            0.5 * (v[i] + v[i + 1]) * 0.5 * (p[i] + p[i + 1]) - (d[i + 1] * p[i + 1] - d[i] * p[i]) / dx
        } else {
            0.0
        };
        out[i] = -(next - prev) / dx;
        prev = next;
    }
    // Outflow through the left face (negative flux) becomes leaked mass.
    out[n] = -left;
}

/// Integrate from `p0` over a duration `t` at the largest stable step.
pub fn integrate_fokker_planck(coeffs: &FpCoefficients, p0: &GridField, t: f64) -> Result<GridField, SolverError> {
    integrate_fokker_planck_with(coeffs, p0, t, FpStep::Auto)
}

pub fn integrate_fokker_planck_with(
    coeffs: &FpCoefficients,
    p0: &GridField,
    t: f64,
    step: FpStep,
) -> Result<GridField, SolverError> {
    if !coeffs.grid.same_as(&p0.grid) {
        return Err(SolverError::Grid(crate::grid::GridError::Shape(format!(
            "{:?} vs {:?}",
            coeffs.grid, p0.grid
        ))));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(SolverError::Invalid(format!("duration {t}")));
    }
    if t == 0.0 {
        return Ok(p0.clone());
    }
    let bound = stable_step(coeffs);
    let dt_max = match step {
        FpStep::Auto => bound,
        FpStep::Requested(dt) if dt > bound => {
            log::warn!("step {dt} exceeds the stability bound {bound}; reducing");
            bound
        }
        FpStep::Requested(dt) => dt,
        FpStep::Strict(dt) if dt > bound => return Err(SolverError::StepSize { requested: dt, bound }),
        FpStep::Strict(dt) => dt,
    };
    if !dt_max.is_finite() {
        // Zero coefficients: nothing moves.
        return Ok(p0.clone());
    }
    let (steps, dt) = step_schedule(t, dt_max);
    let n = p0.grid.n;
    let mut state = p0.values.clone();
    state.push(p0.leaked_mass);
    let mut scratch = Rk4Scratch::default();
    for _ in 0..steps {
        rk4_step(&mut state, dt, &mut scratch, |y, dy| fp_rhs(coeffs, p0.bc, y, dy));
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
