//! Exact simulation of the tagged-mass jump process.
//!
//! Between jumps the log-size is constant, so the holding time at `ξ` is
//! exponential with rate `λ(ξ)`; at a jump `ξ ← ξ − u` with `u ~ K`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::CorrelationEstimate;
use crate::grid::{GridField, LeftBoundary, LogGrid};
use crate::process::LogJumpProcess;
use crate::seeding::replica_rng;

pub const DEFAULT_EVENT_CAP: u64 = 1_000_000;
pub const MIN_REPLICAS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("event cap {cap} reached at t = {t}, xi = {xi}")]
    EventCap { cap: u64, t: f64, xi: f64 },
    #[error("breakage rate overflow at xi = {xi}")]
    RateOverflow { xi: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Jump times and the log-size after each jump; the first entry is `(0, ξ₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedTrajectory {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
}

impl TaggedTrajectory {
    pub fn final_position(&self) -> f64 {
        *self.positions.last().expect("trajectory has an initial point")
    }
}

fn rate(process: &LogJumpProcess, xi: f64) -> Result<f64, SimulationError> {
    let lam = process.rate.reference_rate() * (process.rate.alpha * xi).exp();
    if lam.is_finite() {
        Ok(lam)
    } else {
        Err(SimulationError::RateOverflow { xi })
    }
}

/// Walk from `xi0` for a duration `t`, calling `on_jump(time, xi)` after each jump.
fn walk<R: Rng + ?Sized, F: FnMut(f64, f64)>(
    process: &LogJumpProcess,
    xi0: f64,
    t: f64,
    cap: u64,
    rng: &mut R,
    mut on_jump: F,
) -> Result<f64, SimulationError> {
    let mut xi = xi0;
    let mut now = 0.0;
    let mut events = 0u64;
    loop {
        let lam = rate(process, xi)?;
        if lam == 0.0 {
            // Rate underflow: the walker is frozen for the rest of the run.
            return Ok(xi);
        }
        let hold: f64 = Exp1.sample(rng);
        now += hold / lam;
        if now > t {
            return Ok(xi);
        }
        if events == cap {
            return Err(SimulationError::EventCap { cap, t: now, xi });
        }
        xi -= process.jumps.sample(rng);
        events += 1;
        on_jump(now, xi);
    }
}

/// Full event list of a single walker.
pub fn simulate_tagged<R: Rng + ?Sized>(
    process: &LogJumpProcess,
    xi0: f64,
    t: f64,
    event_cap: u64,
    rng: &mut R,
) -> Result<TaggedTrajectory, SimulationError> {
    check_duration(t)?;
    let mut traj = TaggedTrajectory {
        times: vec![0.0],
        positions: vec![xi0],
    };
    walk(process, xi0, t, event_cap, rng, |s, xi| {
        traj.times.push(s);
        traj.positions.push(xi);
    })?;
    Ok(traj)
}

/// Final log-size of a single walker, without recording the path.
pub fn final_position<R: Rng + ?Sized>(
    process: &LogJumpProcess,
    xi0: f64,
    t: f64,
    event_cap: u64,
    rng: &mut R,
) -> Result<f64, SimulationError> {
    check_duration(t)?;
    walk(process, xi0, t, event_cap, rng, |_, _| {})
}

fn check_duration(t: f64) -> Result<(), SimulationError> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(SimulationError::Invalid(format!("duration {t}")))
    }
}

/// Initial log-size distribution of the tagged quanta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InitialLogSize {
    Delta { xi0: f64 },
    Gaussian { mean: f64, sigma: f64 },
}

impl InitialLogSize {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InitialLogSize::Delta { xi0 } => xi0,
            InitialLogSize::Gaussian { mean, sigma } => Normal::new(mean, sigma).expect("sigma validated").sample(rng),
        }
    }

    fn validate(&self) -> Result<(), SimulationError> {
        match *self {
            InitialLogSize::Delta { xi0 } if xi0.is_finite() => Ok(()),
            InitialLogSize::Gaussian { mean, sigma } if mean.is_finite() && sigma.is_finite() && sigma > 0.0 => Ok(()),
            other => Err(SimulationError::Invalid(format!("{other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub replicas: usize,
    pub seed: u64,
    pub event_cap: u64,
}

impl EnsembleSpec {
    pub fn new(replicas: usize, seed: u64) -> Self {
        Self {
            replicas,
            seed,
            event_cap: DEFAULT_EVENT_CAP,
        }
    }
}

/// Final positions of `replicas` independent walkers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedEnsemble {
    pub positions: Vec<f64>,
    pub t: f64,
    pub seed: u64,
}

impl TaggedEnsemble {
    pub fn replicas(&self) -> usize {
        self.positions.len()
    }

    pub fn mean(&self) -> f64 {
        self.positions.iter().sum::<f64>() / self.positions.len() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let n = self.positions.len() as f64;
        self.positions.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    }
}

/// Replica `i` draws its start and its path from stream `(seed, i)`.
pub fn simulate_ensemble(
    process: &LogJumpProcess,
    init: &InitialLogSize,
    t: f64,
    spec: &EnsembleSpec,
) -> Result<TaggedEnsemble, SimulationError> {
    check_duration(t)?;
    init.validate()?;
    let positions = (0..spec.replicas as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(spec.seed, i);
            let xi0 = init.sample(&mut rng);
            walk(process, xi0, t, spec.event_cap, &mut rng, |_, _| {})
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TaggedEnsemble {
        positions,
        t,
        seed: spec.seed,
    })
}

/// Histogram estimate of `p(ξ, t)` with per-bin standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub field: GridField,
    pub stderr: Vec<f64>,
}

/// Bin positions on `grid`. Counts are divided by `R·dx`, so the in-grid
/// integral plus the fraction that left through the lower edge is one.
pub fn histogram(positions: &[f64], grid: &LogGrid) -> DensityEstimate {
    let r = positions.len() as f64;
    let dx = grid.dx();
    let mut counts = vec![0u64; grid.n];
    let mut outside = 0u64;
    for &xi in positions {
        match grid.cell(xi) {
            Some(i) => counts[i] += 1,
            None => outside += 1,
        }
    }
    let mut field = GridField::zeros(*grid, LeftBoundary::AbsorbLeft);
    let mut stderr = vec![0.0; grid.n];
    for i in 0..grid.n {
        let p = counts[i] as f64 / r;
        field.values[i] = p / dx;
        stderr[i] = (p * (1.0 - p) / r).sqrt() / dx;
    }
    field.leaked_mass = outside as f64 / r;
    DensityEstimate { field, stderr }
}

pub fn ensemble_density(
    process: &LogJumpProcess,
    init: &InitialLogSize,
    t: f64,
    grid: &LogGrid,
    spec: &EnsembleSpec,
) -> Result<DensityEstimate, SimulationError> {
    if spec.replicas < MIN_REPLICAS {
        return Err(SimulationError::Invalid(format!(
            "need at least {MIN_REPLICAS} replicas, got {}",
            spec.replicas
        )));
    }
    let ens = simulate_ensemble(process, init, t, spec)?;
    Ok(histogram(&ens.positions, grid))
}

/// Count covariance across `spec.replicas` runs of `tags` independent
/// walkers each, binned on `bins`. Walkers outside the bins are not counted.
pub fn tagged_correlator(
    process: &LogJumpProcess,
    init: &InitialLogSize,
    t: f64,
    tags: usize,
    bins: &LogGrid,
    spec: &EnsembleSpec,
) -> Result<CorrelationEstimate, SimulationError> {
    let (runs, seed, event_cap) = (spec.replicas, spec.seed, spec.event_cap);
    if runs < MIN_REPLICAS {
        return Err(SimulationError::Invalid(format!("need at least {MIN_REPLICAS} runs, got {runs}")));
    }
    check_duration(t)?;
    init.validate()?;
    let samples = (0..runs as u64)
        .into_par_iter()
        .map(|run| {
            let mut rng = replica_rng(seed, run);
            let mut counts = vec![0.0; bins.n];
            for _ in 0..tags {
                let xi0 = init.sample(&mut rng);
                let xi = walk(process, xi0, t, event_cap, &mut rng, |_, _| {})?;
                if let Some(i) = bins.cell(xi) {
                    counts[i] += 1.0;
                }
            }
            Ok(counts)
        })
        .collect::<Result<Vec<_>, SimulationError>>()?;
    Ok(CorrelationEstimate::from_samples(bins.nodes(), &samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jump_law::LogJumpLaw;
    use crate::kernel::{BreakageRate, DaughterLaw};

    fn process(alpha: f64, k: f64) -> LogJumpProcess {
        LogJumpProcess::new(
            BreakageRate::new(alpha, k, 1.0).unwrap(),
            LogJumpLaw::from_daughter(&DaughterLaw::UniformBinary).unwrap(),
        )
    }

    #[test]
    fn zero_time_trajectory() {
        let mut rng = replica_rng(1, 0);
        let tr = simulate_tagged(&process(1.0, 1.0), 0.3, 0.0, DEFAULT_EVENT_CAP, &mut rng).unwrap();
        assert_eq!(tr.times, vec![0.0]);
        assert_eq!(tr.positions, vec![0.3]);
    }

    #[test]
    fn paths_are_monotone() {
        let mut rng = replica_rng(2, 0);
        for _ in 0..200 {
            let tr = simulate_tagged(&process(1.0, 3.0), 1.0, 5.0, DEFAULT_EVENT_CAP, &mut rng).unwrap();
            assert!(tr.positions.windows(2).all(|w| w[1] <= w[0]));
            assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
            assert!(*tr.times.last().unwrap() <= 5.0);
        }
    }

    #[test]
    fn negative_alpha_runs_away_into_the_cap() {
        let mut rng = replica_rng(3, 0);
        let r = simulate_tagged(&process(-1.0, 1.0), 0.0, 50.0, 500, &mut rng);
        assert!(matches!(r, Err(SimulationError::EventCap { cap: 500, .. })));
    }

    #[test]
    fn ensemble_is_independent_of_thread_count() {
        let p = process(1.0, 1.0);
        let spec = EnsembleSpec::new(2000, 99);
        let init = InitialLogSize::Gaussian { mean: 0.0, sigma: 0.3 };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| simulate_ensemble(&p, &init, 1.0, &spec)).unwrap();
        let b = four.install(|| simulate_ensemble(&p, &init, 1.0, &spec)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_time_delta_occupies_one_bin() {
        let g = LogGrid::new(-2.0, 2.0, 40).unwrap();
        let est = ensemble_density(&process(1.0, 1.0), &InitialLogSize::Delta { xi0: 0.05 }, 0.0, &g, &EnsembleSpec::new(500, 1)).unwrap();
        let occupied: Vec<_> = est.field.values.iter().filter(|&&v| v > 0.0).collect();
        assert_eq!(occupied.len(), 1);
        assert!((est.field.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_replicas_rejected() {
        let g = LogGrid::new(-2.0, 2.0, 40).unwrap();
        let r = ensemble_density(&process(1.0, 1.0), &InitialLogSize::Delta { xi0: 0.0 }, 1.0, &g, &EnsembleSpec::new(10, 1));
        assert!(matches!(r, Err(SimulationError::Invalid(_))));
    }
}
