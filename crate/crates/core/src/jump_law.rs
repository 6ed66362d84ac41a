//! The log-size jump law `K(u) = e^{−2u} B(e^{−u})` induced by a split law,
//! its moments, and samplers.
//!
//! A `scale` ε turns `K` into the rescaled family `K_ε(u) = K(u/ε)/ε`, which
//! keeps the shape and shrinks the jumps; ε = 1 is the physical law.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kernel::{validate_daughter_law, DaughterDensity, DaughterLaw, HomogeneousKernel, KernelError};
use crate::quadrature::{integrate_with_breaks, kronrod_panel};

/// Probability mass allowed beyond the truncation point `u_max`.
pub const TAIL_MASS: f64 = 1e-10;
/// Absolute tolerance of the moment integrals.
pub const MOMENT_TOL: f64 = 1e-10;
/// Number of probability nodes in the inverse-CDF sampler table.
pub const SAMPLER_TABLE: usize = 4096;

const FINE_CELLS: usize = 8192;

/// Inverse-CDF sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum JumpSampler {
    /// `u = −ln(1 − U)/2` (uniform binary splitting).
    Exponential,
    /// Monotone cubic interpolation of `u(p)` on uniform probability nodes.
    Table(MonotoneCubic),
}

/// Fritsch–Carlson monotone cubic Hermite interpolant on a uniform abscissa
/// `x_i = i / (n − 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCubic {
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(ys: Vec<f64>) -> Self {
        let n = ys.len();
        assert!(n >= 2, "need at least two nodes");
        let h = 1.0 / (n - 1) as f64;
        let secants: Vec<f64> = ys.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = secants[0];
        slopes[n - 1] = secants[n - 2];
        for i in 1..n - 1 {
            let (a, b) = (secants[i - 1], secants[i]);
            slopes[i] = if a * b <= 0.0 { 0.0 } else { 0.5 * (a + b) };
        }
        for i in 0..n - 1 {
            let d = secants[i];
            if d == 0.0 {
                slopes[i] = 0.0;
                slopes[i + 1] = 0.0;
                continue;
            }
            let a = slopes[i] / d;
            let b = slopes[i + 1] / d;
            let s = a * a + b * b;
            if s > 9.0 {
                let tau = 3.0 / s.sqrt();
                slopes[i] = tau * a * d;
                slopes[i + 1] = tau * b * d;
            }
        }
        Self { ys, slopes }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.ys.len();
        let h = 1.0 / (n - 1) as f64;
        let pos = (x.clamp(0.0, 1.0) / h).min((n - 1) as f64);
        let i = (pos.floor() as usize).min(n - 2);
        let t = pos - i as f64;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

/// Normalised log-jump density with cached moments and a sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogJumpLaw {
    daughter: DaughterLaw,
    scale: f64,
    u_max: f64,
    normalisation: f64,
    moments: [f64; 3],
    sampler: JumpSampler,
}

impl LogJumpLaw {
    /// Build the jump law of a daughter law.
    pub fn from_daughter(daughter: &DaughterLaw) -> Result<Self, KernelError> {
        Self::build(daughter.clone(), 1.0)
    }

    /// The rescaled family member `K_ε(u) = K(u/ε)/ε`.
    pub fn scaled(&self, scale: f64) -> Result<Self, KernelError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(KernelError::InvalidKernel(format!("jump scale must be positive, got {scale}")));
        }
        Self::build(self.daughter.clone(), self.scale * scale)
    }

    fn build(daughter: DaughterLaw, scale: f64) -> Result<Self, KernelError> {
        let report = validate_daughter_law(&daughter)?;
        if !report.pass {
            return Err(KernelError::InvalidKernel(format!(
                "daughter law not normalised: int pi = {}, int zB = {}",
                report.split_integral, report.mass_integral
            )));
        }
        let unit_u_max = truncation_point(&daughter)?;
        let mut law = Self {
            daughter,
            scale,
            u_max: unit_u_max * scale,
            normalisation: 0.0,
            moments: [0.0; 3],
            sampler: JumpSampler::Exponential,
        };
        let breaks = law.breaks();
        law.normalisation = integrate_with_breaks(|u| law.density(u), &breaks, MOMENT_TOL)?.value;
        for order in 1..=3u32 {
            let f = |u: f64| u.powi(order as i32) * law.density(u);
            let body = integrate_with_breaks(f, &breaks, MOMENT_TOL)?.value;
            // The moment weight u^n lifts the truncated tail above TAIL_MASS, so
            // include [u_max, 4 u_max]; a divergent moment shows up as a
            // non-negligible contribution from [4 u_max, 16 u_max].
            let near = integrate_with_breaks(f, &[law.u_max, 4.0 * law.u_max], 1e-13)?.value;
            let far = integrate_with_breaks(f, &[4.0 * law.u_max, 16.0 * law.u_max], 1e-13)?.value;
            let m = body + near;
            if !(far.is_finite() && far < 1e-8 * (1.0 + m)) {
                return Err(KernelError::MomentDivergence { order, tail: far });
            }
            law.moments[order as usize - 1] = m;
        }
        law.sampler = match law.daughter {
            DaughterLaw::UniformBinary => JumpSampler::Exponential,
            _ => JumpSampler::Table(law.build_table()?),
        };
        Ok(law)
    }

    fn breaks(&self) -> Vec<f64> {
        let mut b = vec![0.0, self.u_max];
        for z in self.daughter.breakpoints() {
            if z > 0.0 && z < 1.0 {
                let u = -z.ln() * self.scale;
                if u < self.u_max {
                    b.push(u);
                }
            }
        }
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    fn build_table(&self) -> Result<MonotoneCubic, KernelError> {
        // Cumulative distribution on a fine uniform u-grid.
        let du = self.u_max / FINE_CELLS as f64;
        let mut cdf = Vec::with_capacity(FINE_CELLS + 1);
        cdf.push(0.0);
        for j in 0..FINE_CELLS {
            let a = j as f64 * du;
            let p = kronrod_panel(&|u| self.density(u), a, a + du)?;
            cdf.push(cdf[j] + p.value);
        }
        let total = cdf[FINE_CELLS];
        let mut ys = Vec::with_capacity(SAMPLER_TABLE);
        for i in 0..SAMPLER_TABLE {
            let p = i as f64 / (SAMPLER_TABLE - 1) as f64 * total;
            if i == 0 {
                ys.push(0.0);
                continue;
            }
            if i == SAMPLER_TABLE - 1 {
                ys.push(self.u_max);
                continue;
            }
            let j = cdf.partition_point(|&c| c <= p).clamp(1, FINE_CELLS) - 1;
            let base = cdf[j];
            let (mut lo, mut hi) = (j as f64 * du, (j + 1) as f64 * du);
            let a = lo;
            for _ in 0..48 {
                let mid = 0.5 * (lo + hi);
                let partial = base + kronrod_panel(&|u| self.density(u), a, mid)?.value;
                if partial < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            ys.push(0.5 * (lo + hi));
        }
        Ok(MonotoneCubic::new(ys))
    }

    /// `K(u)`; zero for `u < 0`.
    pub fn density(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 0.0;
        }
        let w = u / self.scale;
        (-2.0 * w).exp() * self.daughter.daughter_density((-w).exp()) / self.scale
    }

    /// `m_n = ∫ uⁿ K(u) du` for `n ∈ {1, 2, 3}`.
    pub fn moment(&self, n: u32) -> f64 {
        assert!((1..=3).contains(&n), "moments are cached for n = 1, 2, 3 only");
        self.moments[n as usize - 1]
    }

    pub fn mean(&self) -> f64 {
        self.moments[0]
    }

    pub fn variance(&self) -> f64 {
        self.moments[1] - self.moments[0] * self.moments[0]
    }

    /// `∫₀^{u_max} K(u) du` as computed at construction.
    pub fn normalisation(&self) -> f64 {
        self.normalisation
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn daughter(&self) -> &DaughterLaw {
        &self.daughter
    }

    /// Quantile function `u(p)` used by the sampler.
    pub fn inverse_cdf(&self, p: f64) -> f64 {
        match &self.sampler {
            JumpSampler::Exponential => -0.5 * (-p).ln_1p() * self.scale,
            JumpSampler::Table(t) => t.eval(p),
        }
    }

    /// `∫₀^u K`, computed by quadrature.
    pub fn cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        match self.daughter {
            DaughterLaw::UniformBinary => -(-2.0 * u / self.scale).exp_m1(),
            _ => {
                let mut b: Vec<f64> = self.breaks().into_iter().filter(|&x| x < u).collect();
                b.push(u);
                integrate_with_breaks(|v| self.density(v), &b, 1e-12)
                    .map(|r| r.value)
                    .unwrap_or(f64::NAN)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.inverse_cdf(rng.random::<f64>())
    }

    /// Coarse-graining parameters `(ε₁, ε₂) = (√Var(u)/ℓ, ⟨u³⟩^{1/3}/ℓ)`.
    pub fn validity_parameters(&self, ell: f64) -> Result<(f64, f64), KernelError> {
        if !(ell.is_finite() && ell > 0.0) {
            return Err(KernelError::InvalidKernel(format!("observation scale must be positive, got {ell}")));
        }
        if !self.moments[2].is_finite() {
            return Err(KernelError::MomentDivergence {
                order: 3,
                tail: f64::INFINITY,
            });
        }
        Ok((self.variance().max(0.0).sqrt() / ell, self.moments[2].cbrt() / ell))
    }
}

/// Smallest `u` (up to bisection resolution) with `∫_u^∞ K < TAIL_MASS`, for
/// unit scale. Uses `∫_u^∞ K = ∫_0^{e^{−u}} z B(z) dz`.
fn truncation_point(daughter: &DaughterLaw) -> Result<f64, KernelError> {
    let tail = |u: f64| -> Result<f64, KernelError> {
        let top = (-u).exp();
        let mut b = vec![0.0];
        b.extend(daughter.breakpoints().into_iter().filter(|&z| z > 0.0 && z < top));
        b.push(top);
        Ok(integrate_with_breaks(|z| z * daughter.daughter_density(z), &b, 1e-15)?.value)
    };
    let mut hi = 1.0;
    while tail(hi)? >= TAIL_MASS {
        hi *= 2.0;
        if hi > 700.0 {
            return Err(KernelError::InvalidKernel(
                "log-jump law has no integrable tail".into(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if tail(mid)? < TAIL_MASS {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

impl HomogeneousKernel {
    pub fn log_jump_law(&self) -> Result<LogJumpLaw, KernelError> {
        LogJumpLaw::from_daughter(&self.daughter)
    }
}
