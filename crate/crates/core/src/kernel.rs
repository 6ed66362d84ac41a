//! Homogeneous breakage kernels: selection rate `S(x) = k x^α` and a binary
//! split law `π(z)` on `(0, 1)` with induced daughter density
//! `B(z) = π(z) + π(1 − z)`.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::quadrature::{integrate_with_breaks, QuadratureError};

/// Tolerance for the normalisation checks of a daughter law.
pub const VALIDATION_TOL: f64 = 1e-8;

/// Relative adjustment above which renormalising a tabulated split density
/// is reported as a warning.
pub const RENORMALISATION_WARN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("moment m{order} diverges (tail contribution {tail:e})")]
    MomentDivergence { order: u32, tail: f64 },
    #[error("breakage rate out of floating-point range at xi = {xi}")]
    Range { xi: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Anything that can be read as a binary daughter law.
pub trait DaughterDensity {
    /// Split density `π(z)` of the fragment fraction `z`.
    fn split_density(&self, z: f64) -> f64;

    /// Fragment-number density `B(z)`.
    fn daughter_density(&self, z: f64) -> f64 {
        self.split_density(z) + self.split_density(1.0 - z)
    }

    /// Kinks or singular points of `π` inside `[0, 1]` (used to seed quadrature).
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Piecewise-linear split density on a user grid, zero outside the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedSplit {
    z: Vec<f64>,
    pi: Vec<f64>,
    cdf: Vec<f64>,
    /// Relative change applied by renormalisation on load.
    pub adjustment: f64,
}

impl TabulatedSplit {
    pub fn new(z: Vec<f64>, pi: Vec<f64>) -> Result<Self, KernelError> {
        if z.len() != pi.len() || z.len() < 2 {
            return Err(KernelError::InvalidKernel(
                "tabulated split law needs at least two (z, pi) pairs".into(),
            ));
        }
        if z.iter().chain(pi.iter()).any(|v| !v.is_finite()) {
            return Err(KernelError::InvalidKernel("non-finite value in split table".into()));
        }
        if z[0] < 0.0 || z[z.len() - 1] > 1.0 || z.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KernelError::InvalidKernel(
                "split grid must be strictly increasing inside [0, 1]".into(),
            ));
        }
        if pi.iter().any(|&p| p < 0.0) {
            return Err(KernelError::InvalidKernel("negative split density".into()));
        }
        let mass: f64 = z
            .windows(2)
            .zip(pi.windows(2))
            .map(|(zw, pw)| 0.5 * (pw[0] + pw[1]) * (zw[1] - zw[0]))
            .sum();
        if mass <= 0.0 {
            return Err(KernelError::InvalidKernel("split density integrates to zero".into()));
        }
        let adjustment = (mass - 1.0).abs();
        if adjustment > RENORMALISATION_WARN {
            log::warn!("tabulated split density integrates to {mass}; renormalised");
        }
        let pi: Vec<f64> = pi.into_iter().map(|p| p / mass).collect();
        let mut cdf = Vec::with_capacity(z.len());
        cdf.push(0.0);
        for i in 1..z.len() {
            let seg = 0.5 * (pi[i - 1] + pi[i]) * (z[i] - z[i - 1]);
            cdf.push(cdf[i - 1] + seg);
        }
        Ok(Self {
            z,
            pi,
            cdf,
            adjustment,
        })
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.z, &self.pi)
    }

    fn eval(&self, z: f64) -> f64 {
        let n = self.z.len();
        if z < self.z[0] || z > self.z[n - 1] {
            return 0.0;
        }
        let i = self.z.partition_point(|&g| g <= z).clamp(1, n - 1);
        let t = (z - self.z[i - 1]) / (self.z[i] - self.z[i - 1]);
        self.pi[i - 1] + t * (self.pi[i] - self.pi[i - 1])
    }

    /// Exact inverse CDF of the piecewise-linear density.
    fn quantile(&self, p: f64) -> f64 {
        let total = self.cdf[self.cdf.len() - 1];
        let target = p * total;
        let i = self
            .cdf
            .partition_point(|&c| c <= target)
            .clamp(1, self.z.len() - 1);
        let (z0, z1) = (self.z[i - 1], self.z[i]);
        let (p0, p1) = (self.pi[i - 1], self.pi[i]);
        let w = z1 - z0;
        let rem = (target - self.cdf[i - 1]).max(0.0);
        let slope = (p1 - p0) / w;
        // Solve p0 s + slope s²/2 = rem for s in [0, w].
        let s = if slope.abs() < 1e-14 * (p0.abs() + 1.0) {
            if p0 > 0.0 {
                rem / p0
            } else {
                0.0
            }
        } else {
            let disc = (p0 * p0 + 2.0 * slope * rem).max(0.0);
            let denom = p0 + disc.sqrt();
            if denom > 0.0 {
                2.0 * rem / denom
            } else {
                0.0
            }
        };
        (z0 + s.clamp(0.0, w)).clamp(0.0, 1.0)
    }
}

/// Binary split law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum DaughterLaw {
    /// `π(z) = 1`, `B(z) = 2`.
    UniformBinary,
    /// `π(z) ∝ z^{a−1}(1 − z)^{a−1}`.
    SymmetricBeta { a: f64 },
    Tabulated(TabulatedSplit),
}

impl DaughterLaw {
    pub fn symmetric_beta(a: f64) -> Result<Self, KernelError> {
        if !(a.is_finite() && a > 0.0) {
            return Err(KernelError::InvalidKernel(format!("beta shape must be positive, got {a}")));
        }
        Ok(Self::SymmetricBeta { a })
    }

    pub fn tabulated(z: Vec<f64>, pi: Vec<f64>) -> Result<Self, KernelError> {
        TabulatedSplit::new(z, pi).map(Self::Tabulated)
    }

    /// Draw a split fraction `z ~ π`.
    pub fn sample_split<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::UniformBinary => rng.random::<f64>(),
            Self::SymmetricBeta { a } => Beta::new(*a, *a)
                .expect("validated beta shape")
                .sample(rng),
            Self::Tabulated(t) => t.quantile(rng.random::<f64>()),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(self, Self::Tabulated(_))
    }
}

impl DaughterDensity for DaughterLaw {
    fn split_density(&self, z: f64) -> f64 {
        if !(0.0..=1.0).contains(&z) {
            return 0.0;
        }
        match self {
            Self::UniformBinary => 1.0,
            Self::SymmetricBeta { a } => {
                let ln_norm = 2.0 * ln_gamma(*a) - ln_gamma(2.0 * a);
                // Keep the endpoint singularity of a < 1 finite when z rounds to 0 or 1.
                let z = z.clamp(f64::EPSILON, 1.0 - f64::EPSILON);
                ((a - 1.0) * (z.ln() + (1.0 - z).ln()) - ln_norm).exp()
            }
            Self::Tabulated(t) => t.eval(z),
        }
    }

    fn daughter_density(&self, z: f64) -> f64 {
        match self {
            Self::UniformBinary => {
                if (0.0..=1.0).contains(&z) {
                    2.0
                } else {
                    0.0
                }
            }
            Self::SymmetricBeta { .. } => 2.0 * self.split_density(z),
            Self::Tabulated(t) => t.eval(z) + t.eval(1.0 - z),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Tabulated(t) => {
                let mut b: Vec<f64> = t.z.iter().flat_map(|&z| [z, 1.0 - z]).collect();
                b.sort_by(f64::total_cmp);
                b.dedup();
                b
            }
            _ => Vec::new(),
        }
    }
}

/// Normalisation integrals of a daughter law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// `∫₀¹ π(z) dz`
    pub split_integral: f64,
    /// `∫₀¹ z B(z) dz`
    pub mass_integral: f64,
    pub split_normalised: bool,
    pub mass_conserving: bool,
    pub pass: bool,
}

fn unit_breaks<D: DaughterDensity + ?Sized>(daughter: &D) -> Vec<f64> {
    let mut b = vec![0.0, 1.0];
    b.extend(daughter.breakpoints().into_iter().filter(|z| *z > 0.0 && *z < 1.0));
    b.push(0.5);
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

pub fn validate_daughter_law<D: DaughterDensity + ?Sized>(
    daughter: &D,
) -> Result<ValidationReport, KernelError> {
    let breaks = unit_breaks(daughter);
    let wrap = |e: QuadratureError| match e {
        QuadratureError::NonFinite { x } => {
            KernelError::InvalidKernel(format!("daughter density is not finite at z = {x}"))
        }
        other => KernelError::Quadrature(other),
    };
    let split_integral = integrate_with_breaks(|z| daughter.split_density(z), &breaks, 1e-12)
        .map_err(wrap)?
        .value;
    let mass_integral = integrate_with_breaks(|z| z * daughter.daughter_density(z), &breaks, 1e-12)
        .map_err(wrap)?
        .value;
    let split_normalised = (split_integral - 1.0).abs() <= VALIDATION_TOL;
    let mass_conserving = (mass_integral - 1.0).abs() <= VALIDATION_TOL;
    Ok(ValidationReport {
        split_integral,
        mass_integral,
        split_normalised,
        mass_conserving,
        pass: split_normalised && mass_conserving,
    })
}

/// `λ(ξ) = k x0^α e^{αξ}`, the breakage rate at log-size `ξ = ln(x/x0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakageRate {
    pub alpha: f64,
    pub k: f64,
    pub x0: f64,
}

impl BreakageRate {
    pub fn new(alpha: f64, k: f64, x0: f64) -> Result<Self, KernelError> {
        if !(k.is_finite() && k > 0.0) {
            return Err(KernelError::InvalidKernel(format!("rate constant must be positive, got {k}")));
        }
        if !(x0.is_finite() && x0 > 0.0) {
            return Err(KernelError::InvalidKernel(format!("reference size must be positive, got {x0}")));
        }
        if !alpha.is_finite() {
            return Err(KernelError::InvalidKernel("alpha must be finite".into()));
        }
        if alpha < 0.0 {
            log::warn!("alpha = {alpha} < 0: shattering regime, long-time behaviour is not validated");
        }
        Ok(Self { alpha, k, x0 })
    }

    /// `λ₀ = k x0^α`, the rate at `ξ = 0`.
    pub fn reference_rate(&self) -> f64 {
        self.k * self.x0.powf(self.alpha)
    }

    pub fn at(&self, xi: f64) -> Result<f64, KernelError> {
        let r = self.reference_rate() * (self.alpha * xi).exp();
        if r.is_finite() && r > 0.0 {
            Ok(r)
        } else {
            Err(KernelError::Range { xi })
        }
    }

    /// Selection rate `S(x) = k x^α` in size space.
    pub fn selection(&self, x: f64) -> f64 {
        self.k * x.powf(self.alpha)
    }
}

/// `S(x) = k x^α` together with the split law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousKernel {
    pub alpha: f64,
    pub k: f64,
    pub x0: f64,
    pub daughter: DaughterLaw,
}

impl HomogeneousKernel {
    pub fn new(alpha: f64, k: f64, x0: f64, daughter: DaughterLaw) -> Result<Self, KernelError> {
        BreakageRate::new(alpha, k, x0)?;
        Ok(Self {
            alpha,
            k,
            x0,
            daughter,
        })
    }

    /// Linear selection with uniform binary splitting.
    pub fn airy_type(k: f64, x0: f64) -> Self {
        Self {
            alpha: 1.0,
            k,
            x0,
            daughter: DaughterLaw::UniformBinary,
        }
    }

    pub fn rate(&self) -> BreakageRate {
        BreakageRate {
            alpha: self.alpha,
            k: self.k,
            x0: self.x0,
        }
    }

    pub fn breakage_rate(&self, xi: f64) -> Result<f64, KernelError> {
        self.rate().at(xi)
    }

    pub fn selection(&self, x: f64) -> f64 {
        self.k * x.powf(self.alpha)
    }
}
