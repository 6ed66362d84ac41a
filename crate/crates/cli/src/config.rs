//! Run configuration: a single TOML file.
//!
//! ```toml
//! output = "out"
//!
//! [kernel]
//! alpha = 1.0
//! k = 1.0
//! x0 = 1.0
//! daughter = { variant = "uniform-binary" }
//!
//! [solver]
//! xi_min = -8.0
//! xi_max = 2.0
//! n = 256
//! t = 1.0
//! initial = { kind = "delta", xi0 = 0.0 }
//!
//! [mc]
//! replicas = 100000
//! seed = 1
//!
//! [spectral]
//! xi_star = "median"
//! n = 2048
//! n_modes = 8
//! ```
//!
//! Every section except `[kernel]` may be omitted. Unknown keys are errors.
//!
//! A tabulated split law is read from a CSV with columns `z,pi`:
//! `daughter = { variant = "tabulated", table_path = "split.csv" }`.
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use frag_core::grid::LeftBoundary;
use frag_core::solvers::FpStep;
use frag_core::tagged::{InitialLogSize, DEFAULT_EVENT_CAP};
use frag_core::{DaughterLaw, HomogeneousKernel, LogGrid};

use crate::error::CliError;
use crate::output::read_table;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub lindblad: LindbladConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub alpha: f64,
    pub k: f64,
    #[serde(default = "one")]
    pub x0: f64,
    #[serde(default)]
    pub daughter: DaughterConfig,
    /// The split law `daughter` resolves to, filled in at parse time.
    #[serde(skip)]
    resolved: Option<DaughterLaw>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DaughterConfig {
    #[default]
    UniformBinary,
    SymmetricBeta {
        a: f64,
    },
    Tabulated {
        table_path: PathBuf,
    },
}

impl DaughterConfig {
    fn resolve(&self, base: &Path) -> Result<DaughterLaw, CliError> {
        match self {
            Self::UniformBinary => Ok(DaughterLaw::UniformBinary),
            Self::SymmetricBeta { a } => DaughterLaw::symmetric_beta(*a).map_err(|e| invalid("kernel.daughter.a", e.to_string())),
            Self::Tabulated { table_path } => {
                let path = base.join(table_path);
                let table = read_table(&path, true)?;
                let column = |name: &str| {
                    table
                        .column(name)
                        .ok_or_else(|| invalid("kernel.daughter.table_path", format!("{}: missing column `{name}`", path.display())))
                };
                DaughterLaw::tabulated(column("z")?, column("pi")?)
                    .map_err(|e| invalid("kernel.daughter.table_path", format!("{}: {e}", path.display())))
            }
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub xi_min: f64,
    pub xi_max: f64,
    pub n: usize,
    pub t: f64,
    /// Sections per factor of two in the sectional PBE.
    pub q: u32,
    pub boundary: LeftBoundary,
    pub initial: InitialLogSize,
    pub step: FpStep,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            xi_min: -8.0,
            xi_max: 2.0,
            n: 256,
            t: 1.0,
            q: 8,
            boundary: LeftBoundary::AbsorbLeft,
            initial: InitialLogSize::Delta { xi0: 0.0 },
            step: FpStep::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub replicas: usize,
    pub seed: u64,
    pub event_cap: u64,
    pub max_particles: usize,
    /// Branching fragments below this log-size are removed.
    pub xi_min_cutoff: Option<f64>,
    /// Particles in the monodisperse branching start.
    pub initial_particles: usize,
    /// Walkers per run for the tagged correlator.
    pub tags: usize,
    /// Bins for correlators; none means no correlator output.
    pub correlator_bins: Option<usize>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            replicas: 100_000,
            seed: 1,
            event_cap: DEFAULT_EVENT_CAP,
            max_particles: frag_core::branching::DEFAULT_MAX_PARTICLES,
            xi_min_cutoff: None,
            initial_particles: 1,
            tags: 100,
            correlator_bins: None,
        }
    }
}

/// Reference log-size of the Airy sector.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum XiStar {
    Value(f64),
    Policy(XiStarPolicy),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XiStarPolicy {
    /// Median of the log-master solution at `solver.t`.
    Median,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    pub xi_star: XiStar,
    pub gamma_star: f64,
    /// Dirichlet walls; default `[ξ⋆, solver.xi_max]`.
    pub walls: Option<[f64; 2]>,
    pub n: usize,
    pub n_modes: usize,
    /// Evaluation points for correlators, evenly spaced between the walls.
    pub correlator_points: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            xi_star: XiStar::Policy(XiStarPolicy::Median),
            gamma_star: 0.0,
            walls: None,
            n: 2048,
            n_modes: 8,
            correlator_points: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LindbladConfig {
    pub n: usize,
}

impl Default for LindbladConfig {
    fn default() -> Self {
        Self { n: 32 }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

/// First backticked name in a parser message, e.g. the unknown key.
fn field_in(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

fn invalid(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        message: message.into(),
        line: None,
        column: None,
        field: Some(field.to_string()),
    }
}

impl RunConfig {
    /// Parse with relative paths resolved against the working directory.
    #[cfg(test)]
    pub fn parse(text: &str) -> Result<Self, CliError> {
        Self::parse_at(text, Path::new(""))
    }

    /// Parse with relative paths resolved against `base`.
    pub fn parse_at(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = match e.span() {
                Some(span) => {
                    let (l, c) = line_col(text, span.start);
                    (Some(l), Some(c))
                }
                None => (None, None),
            };
            CliError::Config {
                message: e.message().to_string(),
                line,
                column,
                field: field_in(e.message()),
            }
        })?;
        cfg.kernel.resolved = Some(cfg.kernel.daughter.resolve(base)?);
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        self.kernel()?;
        let s = &self.solver;
        LogGrid::new(s.xi_min, s.xi_max, s.n).map_err(|e| invalid("solver", e.to_string()))?;
        if !(s.t.is_finite() && s.t >= 0.0) {
            return Err(invalid("solver.t", format!("must be finite and non-negative, got {}", s.t)));
        }
        if s.q == 0 {
            return Err(invalid("solver.q", "must be positive"));
        }
        let m = &self.mc;
        if m.replicas == 0 {
            return Err(invalid("mc.replicas", "must be positive"));
        }
        if m.initial_particles == 0 || m.tags == 0 || m.event_cap == 0 || m.max_particles == 0 {
            return Err(invalid("mc", "counts and caps must be positive"));
        }
        if m.correlator_bins.is_some_and(|b| b < 2) {
            return Err(invalid("mc.correlator_bins", "need at least 2 bins"));
        }
        let sp = &self.spectral;
        if sp.n < frag_core::spectral::operator::MIN_NODES {
            return Err(invalid("spectral.n", format!("need at least {} nodes", frag_core::spectral::operator::MIN_NODES)));
        }
        if sp.n_modes == 0 || sp.n_modes > sp.n {
            return Err(invalid("spectral.n_modes", format!("must be in 1..={}", sp.n)));
        }
        if sp.correlator_points == 0 {
            return Err(invalid("spectral.correlator_points", "must be positive"));
        }
        if !sp.gamma_star.is_finite() {
            return Err(invalid("spectral.gamma_star", "must be finite"));
        }
        if let Some([a, b]) = sp.walls {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(invalid("spectral.walls", format!("need left < right, got [{a}, {b}]")));
            }
        }
        if !(2..=frag_core::lindblad::MAX_DENSE_N).contains(&self.lindblad.n) {
            return Err(invalid("lindblad.n", format!("must be in 2..={}", frag_core::lindblad::MAX_DENSE_N)));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<HomogeneousKernel, CliError> {
        let k = &self.kernel;
        let daughter = k.resolved.clone().expect("daughter law resolved at parse time");
        HomogeneousKernel::new(k.alpha, k.k, k.x0, daughter).map_err(|e| invalid("kernel", e.to_string()))
    }

    pub fn grid(&self) -> LogGrid {
        LogGrid::new(self.solver.xi_min, self.solver.xi_max, self.solver.n).expect("checked at parse time")
    }
}
