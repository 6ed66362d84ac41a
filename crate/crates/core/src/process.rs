//! The tagged-mass jump process in log-size: rate `λ(ξ)` plus jump law `K`.

use serde::{Deserialize, Serialize};

use crate::jump_law::LogJumpLaw;
use crate::kernel::{BreakageRate, HomogeneousKernel, KernelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogJumpProcess {
    pub rate: BreakageRate,
    pub jumps: LogJumpLaw,
}

impl LogJumpProcess {
    pub fn new(rate: BreakageRate, jumps: LogJumpLaw) -> Self {
        Self { rate, jumps }
    }

    pub fn from_kernel(kernel: &HomogeneousKernel) -> Result<Self, KernelError> {
        Ok(Self {
            rate: kernel.rate(),
            jumps: kernel.log_jump_law()?,
        })
    }

    /// Same rates, jump law rescaled by `scale`.
    pub fn with_jump_scale(&self, scale: f64) -> Result<Self, KernelError> {
        Ok(Self {
            rate: self.rate,
            jumps: self.jumps.scaled(scale)?,
        })
    }

    pub fn rate_at(&self, xi: f64) -> Result<f64, KernelError> {
        self.rate.at(xi)
    }
}
