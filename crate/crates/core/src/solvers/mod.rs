//! Deterministic integrators: the log-size master equation, the sectional
//! number-density PBE, and the drift–diffusion (Fokker–Planck) reduction.

use thiserror::Error;

use crate::grid::GridError;
use crate::kernel::KernelError;
use crate::quadrature::QuadratureError;

pub mod fokker_planck;
pub mod log_master;
pub mod pbe;

pub use fokker_planck::{integrate_fokker_planck, integrate_fokker_planck_with, km_reduce, stable_step, FpCoefficients, FpStep};
pub use log_master::{integrate_log_master, DiscreteJumpKernel};
pub use pbe::{mass_weighted_transform, mass_weighted_transform_onto, number_density_from_log, solve_pbe_number, SizeField, SizeGrid};

/// Largest tolerated negative undershoot of a density value.
pub const NEGATIVE_UNDERSHOOT: f64 = -1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("domain too small: {0}")]
    Domain(String),
    #[error("initial density not normalised: total probability {0}")]
    NotNormalised(f64),
    #[error("density went negative ({value:e}) at node {node}")]
    NegativeDensity { node: usize, value: f64 },
    #[error("scheme failure: {0}")]
    SchemeFailure(String),
    #[error("requested step {requested} exceeds the stability bound {bound}")]
    StepSize { requested: f64, bound: f64 },
    #[error("population has zero mass")]
    EmptyPopulation,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Clamp tiny negative undershoot to zero; fail beyond the tolerance.
pub(crate) fn enforce_nonnegative(values: &mut [f64]) -> Result<(), SolverError> {
    for (node, v) in values.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < NEGATIVE_UNDERSHOOT {
                return Err(SolverError::NegativeDensity { node, value: *v });
            }
            *v = 0.0;
        }
    }
    Ok(())
}

/// Classical RK4 step for `y' = f(y)` on a flat state vector.
pub(crate) fn rk4_step<F>(y: &mut [f64], dt: f64, scratch: &mut Rk4Scratch, mut f: F)
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = y.len();
    scratch.resize(n);
    let Rk4Scratch { k1, k2, k3, k4, tmp } = scratch;
    f(y, k1);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * dt * k1[i];
    }
    f(tmp, k2);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * dt * k2[i];
    }
    f(tmp, k3);
    for i in 0..n {
        tmp[i] = y[i] + dt * k3[i];
    }
    f(tmp, k4);
    for i in 0..n {
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

#[derive(Debug, Default)]
pub(crate) struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    fn resize(&mut self, n: usize) {
        for v in [&mut self.k1, &mut self.k2, &mut self.k3, &mut self.k4, &mut self.tmp] {
            v.resize(n, 0.0);
        }
    }
}

/// Split `[0, t]` into equal steps no longer than `dt_max`.
pub(crate) fn step_schedule(t: f64, dt_max: f64) -> (usize, f64) {
    if t <= 0.0 {
        return (0, 0.0);
    }
    let steps = (t / dt_max).ceil().max(1.0) as usize;
    (steps, t / steps as f64)
}
