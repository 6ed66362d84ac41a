//! Binary branching cascade: every particle breaks at rate `S(x)` into
//! `z x` and `(1 − z) x` with `z ~ π`.
//!
//! Events are simulated exactly (Gillespie). The breaking particle is drawn
//! from a Fenwick tree keyed by `S(x_i)`; the tree is rebuilt from the sizes
//! every 2^20 events so the total rate never accumulates drift.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::CorrelationEstimate;
use crate::fenwick::Fenwick;
use crate::kernel::HomogeneousKernel;
use crate::seeding::replica_rng;
use crate::solvers::{SizeField, SizeGrid};

pub const DEFAULT_MAX_PARTICLES: usize = 10_000_000;
pub const REBUILD_INTERVAL: u64 = 1 << 20;
pub const MIN_DENSITY_RUNS: usize = 100;
pub const MIN_CORRELATOR_RUNS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BranchingError {
    #[error("population exceeded {cap} particles at t = {}", partial.t)]
    PopulationCap { cap: usize, partial: Box<ParticlePopulation> },
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = KahanSum::default();
    for x in xs {
        s.add(x);
    }
    s.value()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticlePopulation {
    pub sizes: Vec<f64>,
    pub t: f64,
    pub total_mass: f64,
    pub removed_mass: f64,
    /// Number of break events since the population was created.
    pub events: u64,
}

impl ParticlePopulation {
    pub fn new(sizes: Vec<f64>) -> Result<Self, BranchingError> {
        if sizes.is_empty() {
            return Err(BranchingError::Invalid("empty initial population".into()));
        }
        if sizes.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(BranchingError::Invalid("particle sizes must be positive and finite".into()));
        }
        let total_mass = compensated_sum(sizes.iter().copied());
        Ok(Self {
            sizes,
            t: 0.0,
            total_mass,
            removed_mass: 0.0,
            events: 0,
        })
    }

    pub fn monodisperse(count: usize, x: f64) -> Result<Self, BranchingError> {
        Self::new(vec![x; count])
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchingControls {
    pub max_particles: usize,
    /// Daughters with `ln(x/x0)` below this are removed and their mass tallied.
    pub xi_min_cutoff: Option<f64>,
    /// Stop after this many break events even if `t` is not reached.
    pub max_events: Option<u64>,
}

impl Default for BranchingControls {
    fn default() -> Self {
        Self {
            max_particles: DEFAULT_MAX_PARTICLES,
            xi_min_cutoff: None,
            max_events: None,
        }
    }
}

/// Run the cascade from `initial` for a further duration `t`.
pub fn simulate_branching<R: Rng + ?Sized>(
    kernel: &HomogeneousKernel,
    initial: &ParticlePopulation,
    t: f64,
    rng: &mut R,
    controls: &BranchingControls,
) -> Result<ParticlePopulation, BranchingError> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(BranchingError::Invalid(format!("duration {t}")));
    }
    if initial.is_empty() {
        return Err(BranchingError::Invalid("empty initial population".into()));
    }
    let x_cut = controls.xi_min_cutoff.map(|c| kernel.x0 * c.exp()).unwrap_or(0.0);
    let rate = |x: f64| kernel.selection(x);

    let mut sizes = initial.sizes.clone();
    let mut tree = Fenwick::from_weights(&sizes.iter().map(|&x| rate(x)).collect::<Vec<_>>());
    let mut free: Vec<usize> = Vec::new();
    let mut live = sizes.len();
    let mut removed = KahanSum::default();
    removed.add(initial.removed_mass);
    let mut now = 0.0;
    let mut events = 0u64;

    let finish = |sizes: &[f64], free: &[usize], now: f64, events: u64, removed: &KahanSum| {
        let mut dead = vec![false; sizes.len()];
        for &i in free {
            dead[i] = true;
        }
        let kept: Vec<f64> = sizes.iter().zip(&dead).filter(|(_, d)| !**d).map(|(x, _)| *x).collect();
        ParticlePopulation {
            total_mass: compensated_sum(kept.iter().copied()),
            sizes: kept,
            t: initial.t + now,
            removed_mass: removed.value(),
            events: initial.events + events,
        }
    };

    loop {
        if controls.max_events.is_some_and(|m| events >= m) || live == 0 {
            break;
        }
        let total = tree.total();
        if !(total > 0.0) {
            break;
        }
        let hold: f64 = Exp1.sample(rng);
        let dt = hold / total;
        if now + dt > t {
            break;
        }
        now += dt;
        let i = tree.find(rng.random::<f64>() * total);
        let x = sizes[i];
        let z = kernel.daughter.sample_split(rng);
        let d1 = z * x;
        let d2 = x - d1;
        events += 1;

        let mut place = |d: f64, slot: Option<usize>, sizes: &mut Vec<f64>, tree: &mut Fenwick, free: &mut Vec<usize>| {
            if d <= x_cut || d <= 0.0 {
                removed.add(d);
                if let Some(s) = slot {
                    sizes[s] = 0.0;
                    tree.set(s, 0.0);
                    free.push(s);
                }
                return false;
            }
            match slot.or_else(|| free.pop()) {
                Some(s) => {
                    sizes[s] = d;
                    tree.set(s, rate(d));
                }
                None => {
                    sizes.push(d);
                    tree.push(rate(d));
                }
            }
            true
        };
        // The parent's slot takes the first daughter.
        let kept1 = place(d1, Some(i), &mut sizes, &mut tree, &mut free);
        let kept2 = place(d2, None, &mut sizes, &mut tree, &mut free);
        live = live - 1 + kept1 as usize + kept2 as usize;

        if events.is_multiple_of(REBUILD_INTERVAL) {
            let w: Vec<f64> = (0..sizes.len()).map(|s| if sizes[s] > 0.0 { rate(sizes[s]) } else { 0.0 }).collect();
            tree = Fenwick::from_weights(&w);
        }
        if live > controls.max_particles {
            return Err(BranchingError::PopulationCap {
                cap: controls.max_particles,
                partial: Box::new(finish(&sizes, &free, now, events, &removed)),
            });
        }
    }
    // Dead slots carry size 0 and are listed in `free`.
    Ok(finish(&sizes, &free, if controls.max_events.is_some_and(|m| events >= m) { now } else { t }, events, &removed))
}

/// Independent cascades; run `i` uses stream `(seed, i)`.
pub fn simulate_runs(
    kernel: &HomogeneousKernel,
    initial: &ParticlePopulation,
    t: f64,
    runs: usize,
    seed: u64,
    controls: &BranchingControls,
) -> Result<Vec<ParticlePopulation>, BranchingError> {
    (0..runs as u64)
        .into_par_iter()
        .map(|i| simulate_branching(kernel, initial, t, &mut replica_rng(seed, i), controls))
        .collect()
}

/// Section of `grid` containing `x` (sections are `[x_i r^{-1/2}, x_i r^{1/2})`).
pub fn size_bin(grid: &SizeGrid, x: f64) -> Option<usize> {
    let pos = (x / grid.x_min).ln() / grid.h() + 0.5;
    if pos >= 0.0 && pos < grid.n as f64 {
        Some(pos as usize)
    } else {
        None
    }
}

fn counts(pop: &ParticlePopulation, grid: &SizeGrid) -> Vec<f64> {
    let mut c = vec![0.0; grid.n];
    for &x in &pop.sizes {
        if let Some(i) = size_bin(grid, x) {
            c[i] += 1.0;
        }
    }
    c
}

/// Mean number density over runs with per-section standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumberDensityEstimate {
    pub field: SizeField,
    pub stderr: Vec<f64>,
    /// Mean and standard error of the total particle count.
    pub mean_number: f64,
    pub number_stderr: f64,
}

pub fn number_density_estimate(runs: &[ParticlePopulation], grid: &SizeGrid) -> Result<NumberDensityEstimate, BranchingError> {
    if runs.len() < MIN_DENSITY_RUNS {
        return Err(BranchingError::Invalid(format!(
            "need at least {MIN_DENSITY_RUNS} runs, got {}",
            runs.len()
        )));
    }
    let r = runs.len() as f64;
    let mut sum = vec![0.0; grid.n];
    let mut sum_sq = vec![0.0; grid.n];
    let (mut n_sum, mut n_sq) = (0.0, 0.0);
    for pop in runs {
        for (i, c) in counts(pop, grid).into_iter().enumerate() {
            sum[i] += c;
            sum_sq[i] += c * c;
        }
        let n = pop.len() as f64;
        n_sum += n;
        n_sq += n * n;
    }
    let h = grid.h();
    let mut mean_counts = vec![0.0; grid.n];
    let mut stderr = vec![0.0; grid.n];
    for i in 0..grid.n {
        let m = sum[i] / r;
        let var = ((sum_sq[i] / r - m * m) * r / (r - 1.0)).max(0.0);
        mean_counts[i] = m;
        stderr[i] = (var / r).sqrt() / (grid.pivot(i) * h);
    }
    let mean_number = n_sum / r;
    let n_var = ((n_sq / r - mean_number * mean_number) * r / (r - 1.0)).max(0.0);
    Ok(NumberDensityEstimate {
        field: SizeField::from_numbers(*grid, &mean_counts).expect("length matches"),
        stderr,
        mean_number,
        number_stderr: (n_var / r).sqrt(),
    })
}

/// Connected count covariance across runs, per pair of size sections.
pub fn branching_correlator(runs: &[ParticlePopulation], grid: &SizeGrid) -> Result<CorrelationEstimate, BranchingError> {
    if runs.len() < MIN_CORRELATOR_RUNS {
        return Err(BranchingError::Invalid(format!(
            "need at least {MIN_CORRELATOR_RUNS} runs, got {}",
            runs.len()
        )));
    }
    let samples: Vec<Vec<f64>> = runs.iter().map(|p| counts(p, grid)).collect();
    Ok(CorrelationEstimate::from_samples(grid.pivots(), &samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::DaughterLaw;

    #[test]
    fn zero_time_is_identity() {
        let k = HomogeneousKernel::airy_type(1.0, 1.0);
        let p0 = ParticlePopulation::monodisperse(1, 1.0).unwrap();
        let p = simulate_branching(&k, &p0, 0.0, &mut replica_rng(1, 0), &BranchingControls::default()).unwrap();
        assert_eq!(p, p0);
    }

    #[test]
    fn mass_conserved_per_realisation() {
        let k = HomogeneousKernel::new(0.5, 2.0, 1.0, DaughterLaw::symmetric_beta(2.0).unwrap()).unwrap();
        let p0 = ParticlePopulation::new(vec![1.0, 0.3, 2.5]).unwrap();
        for run in 0..20 {
            let p = simulate_branching(&k, &p0, 3.0, &mut replica_rng(5, run), &BranchingControls::default()).unwrap();
            assert!(p.len() > 3);
            assert!((p.total_mass - p0.total_mass).abs() <= 1e-12 * p0.total_mass);
            assert_eq!(p.len() as u64, 3 + p.events);
            assert!(p.sizes.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn cutoff_tallies_removed_mass() {
        let k = HomogeneousKernel::new(0.0, 1.0, 1.0, DaughterLaw::UniformBinary).unwrap();
        let p0 = ParticlePopulation::monodisperse(4, 1.0).unwrap();
        let controls = BranchingControls {
            xi_min_cutoff: Some(-2.0),
            ..Default::default()
        };
        let p = simulate_branching(&k, &p0, 6.0, &mut replica_rng(6, 0), &controls).unwrap();
        assert!(p.removed_mass > 0.0);
        assert!(p.sizes.iter().all(|&x| x > (-2.0f64).exp()));
        assert!(((p.total_mass + p.removed_mass) - 4.0).abs() <= 1e-12 * 4.0);
    }

    #[test]
    fn population_cap_returns_partial_state() {
        let k = HomogeneousKernel::new(0.0, 1.0, 1.0, DaughterLaw::UniformBinary).unwrap();
        let p0 = ParticlePopulation::monodisperse(1, 1.0).unwrap();
        let controls = BranchingControls {
            max_particles: 50,
            ..Default::default()
        };
        match simulate_branching(&k, &p0, 100.0, &mut replica_rng(7, 0), &controls) {
            Err(BranchingError::PopulationCap { cap, partial }) => {
                assert_eq!(cap, 50);
                assert_eq!(partial.len(), 51);
                assert!((partial.total_mass - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_event_stop() {
        let k = HomogeneousKernel::airy_type(1.0, 1.0);
        let p0 = ParticlePopulation::monodisperse(1, 1.0).unwrap();
        let controls = BranchingControls {
            max_events: Some(1),
            ..Default::default()
        };
        let p = simulate_branching(&k, &p0, f64::MAX, &mut replica_rng(8, 0), &controls).unwrap();
        assert_eq!(p.len(), 2);
        assert!((p.sizes[0] + p.sizes[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_time_estimate_is_initial_histogram() {
        let k = HomogeneousKernel::airy_type(1.0, 1.0);
        let g = SizeGrid::geometric(1e-3, 8, 100).unwrap();
        let p0 = ParticlePopulation::monodisperse(3, 1.0).unwrap();
        let runs = simulate_runs(&k, &p0, 0.0, 100, 1, &BranchingControls::default()).unwrap();
        let est = number_density_estimate(&runs, &g).unwrap();
        let expect = SizeField::monodisperse(g, 1.0, 3.0);
        for (a, b) in est.field.values.iter().zip(&expect.values) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let c = branching_correlator(&simulate_runs(&k, &p0, 0.0, 1000, 1, &BranchingControls::default()).unwrap(), &g).unwrap();
        assert!(c.gc.iter().flatten().all(|&v| v == 0.0));
    }
}
