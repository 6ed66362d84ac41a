use std::path::Path;

use serde::Serialize;

use frag_core::branching::{branching_correlator, number_density_estimate, simulate_runs, size_bin, BranchingControls, ParticlePopulation};
use frag_core::correlation::CorrelationEstimate;
use frag_core::grid::{compare_densities, GridField, LogGrid};
use frag_core::kernel::validate_daughter_law;
use frag_core::lindblad::{check_lindblad, LindbladReport};
use frag_core::solvers::{
    integrate_fokker_planck_with, integrate_log_master, km_reduce, mass_weighted_transform_onto, number_density_from_log, solve_pbe_number, SizeField,
    SizeGrid,
};
use frag_core::spectral::{airy_zeros, build_airy_operator, calibrate_airy_params, mode_sum_correlator, ModeCovariance, SpectralSector};
use frag_core::tagged::{histogram, simulate_ensemble, tagged_correlator, EnsembleSpec, InitialLogSize};
use frag_core::LogJumpProcess;

use crate::config::{RunConfig, XiStar};
use crate::error::CliError;
use crate::output::{read_table, to_json_with_meta, Meta, OutputDir};

/// What a command prints, and whether it counts as a failed check.
pub struct Outcome {
    pub stdout: String,
    pub failure: Option<String>,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self { stdout, failure: None }
    }
}

pub struct Context {
    pub config: RunConfig,
    pub config_text: String,
    pub seed: u64,
    pub out: OutputDir,
}

impl Context {
    pub fn load(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<Self, CliError> {
        let config_text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config = RunConfig::parse_at(&config_text, path.parent().unwrap_or(Path::new("")))?;
        let seed = seed.unwrap_or(config.mc.seed);
        let out = OutputDir::create(out.unwrap_or(&config.output))?;
        Ok(Self {
            config,
            config_text,
            seed,
            out,
        })
    }

    fn meta(&self, command: &str) -> Meta {
        Meta::new(command, Some(&self.config_text), Some(self.seed))
    }

    fn process(&self) -> Result<LogJumpProcess, CliError> {
        Ok(LogJumpProcess::from_kernel(&self.config.kernel()?)?)
    }

    fn initial_field(&self) -> GridField {
        let s = &self.config.solver;
        let grid = self.config.grid();
        match s.initial {
            InitialLogSize::Delta { xi0 } => GridField::delta(grid, s.boundary, xi0),
            InitialLogSize::Gaussian { mean, sigma } => GridField::gaussian(grid, s.boundary, mean, sigma),
        }
    }

    /// Sections of ratio `2^{1/q}` covering the solver's log range.
    fn size_grid(&self) -> Result<SizeGrid, CliError> {
        let s = &self.config.solver;
        let h = std::f64::consts::LN_2 / s.q as f64;
        let n = ((s.xi_max - s.xi_min) / h).ceil() as usize;
        Ok(SizeGrid::geometric(self.config.kernel.x0 * (s.xi_min + 0.5 * h).exp(), s.q, n)?)
    }

    fn count_grid(&self, bins: usize) -> Result<SizeGrid, CliError> {
        let s = &self.config.solver;
        let h = (s.xi_max - s.xi_min) / bins as f64;
        Ok(SizeGrid::new(self.config.kernel.x0 * (s.xi_min + 0.5 * h).exp(), h.exp(), bins)?)
    }
}

fn density_rows(p: &GridField) -> Vec<Vec<f64>> {
    p.grid.nodes().into_iter().zip(&p.values).map(|(x, v)| vec![x, *v]).collect()
}

fn correlator_rows(c: &CorrelationEstimate) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(c.len() * c.len());
    for i in 0..c.len() {
        for j in 0..c.len() {
            rows.push(vec![c.centers[i], c.centers[j], c.gc[i][j], c.stderr[i][j]]);
        }
    }
    rows
}

/// Bin means are reported in the run summary as `correlator_mean_counts`.
const TAGGED_CORRELATOR_HEADER: [&str; 4] = ["xi_i", "xi_j", "gc", "stderr"];
const BRANCHING_CORRELATOR_HEADER: [&str; 4] = ["x_i", "x_j", "gc", "stderr"];

#[derive(Serialize)]
struct DensitySummary {
    t: f64,
    xi_min: f64,
    xi_max: f64,
    n: usize,
    total_probability: f64,
    leaked_mass: f64,
    mean: f64,
    variance: f64,
    median: f64,
    files: Vec<String>,
}

fn summarise(p: &GridField, t: f64, files: Vec<String>) -> DensitySummary {
    DensitySummary {
        t,
        xi_min: p.grid.xi_min,
        xi_max: p.grid.xi_max,
        n: p.grid.n,
        total_probability: p.total_probability(),
        leaked_mass: p.leaked_mass,
        mean: p.mean(),
        variance: p.variance(),
        median: p.median(),
        files,
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Serialize)]
struct Validation {
    report: frag_core::ValidationReport,
    m1: f64,
    m2: f64,
    m3: f64,
    u_max: f64,
}

pub fn validate(ctx: &Context) -> Result<Outcome, CliError> {
    let kernel = ctx.config.kernel()?;
    let report = validate_daughter_law(&kernel.daughter)?;
    let law = kernel.log_jump_law()?;
    let body = Validation {
        report,
        m1: law.moment(1),
        m2: law.moment(2),
        m3: law.moment(3),
        u_max: law.u_max(),
    };
    let stdout = to_json_with_meta(&ctx.meta("validate"), &body);
    let failure = (!report.pass).then(|| "daughter law failed validation".to_string());
    Ok(Outcome { stdout, failure })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SolverKind {
    Pbe,
    LogMaster,
    Fp,
}

pub fn solve(ctx: &Context, which: SolverKind) -> Result<Outcome, CliError> {
    let t = ctx.config.solver.t;
    let p0 = ctx.initial_field();
    match which {
        SolverKind::LogMaster => {
            let p = integrate_log_master(&ctx.process()?, &p0, t)?;
            write_density(ctx, "log-master", "log_master", &p, t)
        }
        SolverKind::Fp => {
            let coeffs = km_reduce(&ctx.process()?, &p0.grid)?;
            let p = integrate_fokker_planck_with(&coeffs, &p0, t, ctx.config.solver.step)?;
            write_density(ctx, "fp", "fp", &p, t)
        }
        SolverKind::Pbe => solve_pbe(ctx, &p0, t),
    }
}

fn write_density(ctx: &Context, command: &str, stem: &str, p: &GridField, t: f64) -> Result<Outcome, CliError> {
    let meta = ctx.meta(&format!("solve {command}"));
    let csv = ctx.out.csv(&format!("{stem}_density.csv"), &meta, &["xi", "p"], &density_rows(p))?;
    let json = ctx.out.json(&format!("{stem}_summary.json"), &meta, &summarise(p, t, vec![file_name(&csv)]))?;
    Ok(Outcome::ok(format!("{}\n{}", csv.display(), json.display())))
}

#[derive(Serialize)]
struct PbeSummary {
    #[serde(flatten)]
    density: DensitySummary,
    total_number: f64,
    total_mass: f64,
}

fn solve_pbe(ctx: &Context, p0: &GridField, t: f64) -> Result<Outcome, CliError> {
    let kernel = ctx.config.kernel()?;
    let x0 = kernel.x0;
    let sgrid = ctx.size_grid()?;
    let f0 = match ctx.config.solver.initial {
        InitialLogSize::Delta { xi0 } => {
            let x = x0 * xi0.exp();
            SizeField::monodisperse(sgrid, x, 1.0 / sgrid.pivot(sgrid.nearest(x)))
        }
        InitialLogSize::Gaussian { .. } => number_density_from_log(p0, x0, 1.0, &sgrid)?,
    };
    let f = solve_pbe_number(&kernel, &f0, t)?;
    let p = mass_weighted_transform_onto(&f, x0, &p0.grid)?;
    let meta = ctx.meta("solve pbe");
    let numbers = f.numbers();
    let size_rows: Vec<Vec<f64>> = (0..sgrid.n).map(|i| vec![sgrid.pivot(i), f.values[i], numbers[i]]).collect();
    let size_csv = ctx.out.csv("pbe_size.csv", &meta, &["x", "f", "number"], &size_rows)?;
    let csv = ctx.out.csv("pbe_density.csv", &meta, &["xi", "p"], &density_rows(&p))?;
    let summary = PbeSummary {
        density: summarise(&p, t, vec![file_name(&size_csv), file_name(&csv)]),
        total_number: f.total_number(),
        total_mass: f.total_mass(),
    };
    let json = ctx.out.json("pbe_summary.json", &meta, &summary)?;
    Ok(Outcome::ok(format!("{}\n{}\n{}", size_csv.display(), csv.display(), json.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SimulationKind {
    Tagged,
    Branching,
}

pub fn simulate(ctx: &Context, which: SimulationKind) -> Result<Outcome, CliError> {
    match which {
        SimulationKind::Tagged => simulate_tagged(ctx),
        SimulationKind::Branching => simulate_branching(ctx),
    }
}

#[derive(Serialize)]
struct TaggedSummary {
    t: f64,
    replicas: usize,
    mean: f64,
    variance: f64,
    leaked_mass: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    correlator_mean_counts: Option<Vec<f64>>,
    files: Vec<String>,
}

fn simulate_tagged(ctx: &Context) -> Result<Outcome, CliError> {
    let (mc, s) = (&ctx.config.mc, &ctx.config.solver);
    let process = ctx.process()?;
    let spec = EnsembleSpec {
        replicas: mc.replicas,
        seed: ctx.seed,
        event_cap: mc.event_cap,
    };
    let ens = simulate_ensemble(&process, &s.initial, s.t, &spec)?;
    let grid = ctx.config.grid();
    let est = histogram(&ens.positions, &grid);
    let meta = ctx.meta("simulate tagged");
    let rows: Vec<Vec<f64>> = grid
        .nodes()
        .into_iter()
        .enumerate()
        .map(|(i, x)| vec![x, est.field.values[i], est.stderr[i]])
        .collect();
    let csv = ctx.out.csv("tagged_density.csv", &meta, &["xi", "p", "stderr"], &rows)?;
    let mut files = vec![file_name(&csv)];
    let mut means = None;
    if let Some(bins) = mc.correlator_bins {
        let bin_grid = LogGrid::new(s.xi_min, s.xi_max, bins)?;
        let c = tagged_correlator(&process, &s.initial, s.t, mc.tags, &bin_grid, &spec)?;
        let p = ctx.out.csv("tagged_correlator.csv", &meta, &TAGGED_CORRELATOR_HEADER, &correlator_rows(&c))?;
        files.push(file_name(&p));
        means = Some(c.mean);
    }
    let summary = TaggedSummary {
        t: s.t,
        replicas: ens.replicas(),
        mean: ens.mean(),
        variance: ens.variance(),
        leaked_mass: est.field.leaked_mass,
        correlator_mean_counts: means,
        files,
    };
    let json = ctx.out.json("tagged_summary.json", &meta, &summary)?;
    Ok(Outcome::ok(json.display().to_string()))
}

#[derive(Serialize)]
struct BranchingSummary {
    t: f64,
    runs: usize,
    initial_particles: usize,
    mean_number: f64,
    number_stderr: f64,
    max_relative_mass_defect: f64,
    outside_grid_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    correlator_mean_counts: Option<Vec<f64>>,
    files: Vec<String>,
}

fn simulate_branching(ctx: &Context) -> Result<Outcome, CliError> {
    let (mc, s) = (&ctx.config.mc, &ctx.config.solver);
    let kernel = ctx.config.kernel()?;
    let xi0 = match s.initial {
        InitialLogSize::Delta { xi0 } => xi0,
        InitialLogSize::Gaussian { .. } => {
            return Err(CliError::Config {
                message: "branching runs start monodisperse; use a delta initial condition".into(),
                line: None,
                column: None,
                field: Some("solver.initial".into()),
            })
        }
    };
    let initial = ParticlePopulation::monodisperse(mc.initial_particles, kernel.x0 * xi0.exp())?;
    let controls = BranchingControls {
        max_particles: mc.max_particles,
        xi_min_cutoff: mc.xi_min_cutoff,
        max_events: None,
    };
    let runs = simulate_runs(&kernel, &initial, s.t, mc.replicas, ctx.seed, &controls)?;
    let sgrid = ctx.size_grid()?;
    let est = number_density_estimate(&runs, &sgrid)?;
    let meta = ctx.meta("simulate branching");
    let rows: Vec<Vec<f64>> = (0..sgrid.n).map(|i| vec![sgrid.pivot(i), est.field.values[i], est.stderr[i]]).collect();
    let size_csv = ctx.out.csv("branching_size.csv", &meta, &["x", "f", "stderr"], &rows)?;
    let p = mass_weighted_transform_onto(&est.field, kernel.x0, &ctx.config.grid())?;
    let csv = ctx.out.csv("branching_density.csv", &meta, &["xi", "p"], &density_rows(&p))?;
    let mut files = vec![file_name(&size_csv), file_name(&csv)];
    let mut means = None;
    if let Some(bins) = mc.correlator_bins {
        let c = branching_correlator(&runs, &ctx.count_grid(bins)?)?;
        let path = ctx.out.csv("branching_correlator.csv", &meta, &BRANCHING_CORRELATOR_HEADER, &correlator_rows(&c))?;
        files.push(file_name(&path));
        means = Some(c.mean);
    }
    let m0 = initial.total_mass;
    let defect = runs
        .iter()
        .map(|r| ((r.total_mass + r.removed_mass) - m0).abs() / m0)
        .fold(0.0, f64::max);
    let (mut outside, mut total) = (0usize, 0usize);
    for r in &runs {
        total += r.len();
        outside += r.sizes.iter().filter(|x| size_bin(&sgrid, **x).is_none()).count();
    }
    let summary = BranchingSummary {
        t: s.t,
        runs: runs.len(),
        initial_particles: mc.initial_particles,
        mean_number: est.mean_number,
        number_stderr: est.number_stderr,
        max_relative_mass_defect: defect,
        outside_grid_fraction: outside as f64 / total.max(1) as f64,
        correlator_mean_counts: means,
        files,
    };
    let json = ctx.out.json("branching_summary.json", &meta, &summary)?;
    Ok(Outcome::ok(json.display().to_string()))
}

fn build_sector(ctx: &Context) -> Result<(SpectralSector, f64, Option<f64>), CliError> {
    let sp = &ctx.config.spectral;
    let process = ctx.process()?;
    let xi_star = match sp.xi_star {
        XiStar::Value(v) => v,
        XiStar::Policy(_) => integrate_log_master(&process, &ctx.initial_field(), ctx.config.solver.t)?.median(),
    };
    let cal = calibrate_airy_params(&process, xi_star, sp.gamma_star)?;
    let walls = sp.walls.map_or((xi_star, ctx.config.solver.xi_max), |[a, b]| (a, b));
    let op = build_airy_operator(&cal.params, walls, sp.n)?;
    Ok((SpectralSector::from_operator(&op, sp.n_modes)?, cal.lambda_star, cal.ell_a))
}

#[derive(Serialize)]
struct Eigenvalue {
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct SpectrumReport {
    #[serde(rename = "D_star")]
    d_star: f64,
    #[serde(rename = "F_star")]
    f_star: f64,
    #[serde(rename = "Gamma_star")]
    gamma_star: f64,
    xi_star: f64,
    lambda_star: f64,
    ell_a: Option<f64>,
    walls: [f64; 2],
    n: usize,
    eigenvalues: Vec<Eigenvalue>,
    /// `−Γ⋆ − (D⋆F⋆²)^{1/3}|a_n|` for a confining slope.
    airy_prediction: Option<Vec<f64>>,
    modes_right: String,
    modes_left: String,
}

fn mode_rows(sector: &SpectralSector, left: bool) -> Vec<Vec<f64>> {
    let m = if left { &sector.pairs.left } else { &sector.pairs.right };
    sector
        .nodes
        .iter()
        .enumerate()
        .map(|(i, x)| std::iter::once(*x).chain(m.row(i).iter().map(|z| z.re)).collect())
        .collect()
}

pub fn spectrum(ctx: &Context) -> Result<Outcome, CliError> {
    let (sector, lambda_star, ell_a) = build_sector(ctx)?;
    let meta = ctx.meta("spectrum");
    let k = sector.pairs.len();
    let names: Vec<String> = std::iter::once("xi".to_string()).chain((1..=k).map(|i| format!("mode_{i}"))).collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    let right = ctx.out.csv("modes_right.csv", &meta, &header, &mode_rows(&sector, false))?;
    let left = ctx.out.csv("modes_left.csv", &meta, &header, &mode_rows(&sector, true))?;
    let p = sector.params;
    let airy_prediction = (p.f_star > 0.0).then(|| {
        let scale = (p.d_star * p.f_star * p.f_star).cbrt();
        airy_zeros(k).into_iter().map(|a| -p.gamma_star - scale * a.abs()).collect()
    });
    let report = SpectrumReport {
        d_star: p.d_star,
        f_star: p.f_star,
        gamma_star: p.gamma_star,
        xi_star: p.xi_star,
        lambda_star,
        ell_a,
        walls: [sector.walls.0, sector.walls.1],
        n: sector.nodes.len(),
        eigenvalues: sector.eigenvalues().iter().map(|z| Eigenvalue { re: z.re, im: z.im }).collect(),
        airy_prediction,
        modes_right: file_name(&right),
        modes_left: file_name(&left),
    };
    let json = ctx.out.json("spectrum.json", &meta, &report)?;
    Ok(Outcome::ok(json.display().to_string()))
}

#[derive(Serialize)]
struct CorrelateReport {
    times: Vec<f64>,
    points: usize,
    files: Vec<String>,
}

pub fn correlate(ctx: &Context, covariance: &Path, times: &[f64]) -> Result<Outcome, CliError> {
    if times.is_empty() || times.iter().any(|t| !t.is_finite()) {
        return Err(CliError::Config {
            message: format!("need finite times, got {times:?}"),
            line: None,
            column: None,
            field: Some("--times".into()),
        });
    }
    let table = read_table(covariance, false)?;
    let k = ctx.config.spectral.n_modes;
    if table.rows.len() != k || table.rows.iter().any(|r| r.len() != k) {
        return Err(CliError::Input {
            path: covariance.display().to_string(),
            line: 1,
            message: format!("expected a {k}x{k} mode covariance"),
        });
    }
    let c = ModeCovariance::from_real(&nalgebra::DMatrix::from_fn(k, k, |i, j| table.rows[i][j]))?;
    let (sector, _, _) = build_sector(ctx)?;
    let (a, b) = sector.walls;
    let np = ctx.config.spectral.correlator_points;
    let points: Vec<f64> = (0..np).map(|i| a + (i as f64 + 0.5) * (b - a) / np as f64).collect();
    let meta = ctx.meta("correlate");
    let mut files = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let g = mode_sum_correlator(&sector, &c, t, &points)?;
        let rows: Vec<Vec<f64>> = (0..np).flat_map(|p| (0..np).map(move |q| (p, q))).map(|(p, q)| vec![points[p], points[q], g.gc[p][q]]).collect();
        let path = ctx.out.csv(&format!("correlator_{i}.csv"), &meta, &["xi_1", "xi_2", "gc"], &rows)?;
        files.push(file_name(&path));
    }
    let json = ctx.out.json(
        "correlate.json",
        &meta,
        &CorrelateReport {
            times: times.to_vec(),
            points: np,
            files,
        },
    )?;
    Ok(Outcome::ok(json.display().to_string()))
}

/// Density on a cell-centred grid read back from an `xi,p` file.
fn read_density(path: &Path) -> Result<GridField, CliError> {
    let table = read_table(path, true)?;
    let shown = path.display().to_string();
    let bad = |message: String| CliError::Input {
        path: shown.clone(),
        line: 1,
        message,
    };
    let xi = table.column("xi").ok_or_else(|| bad("missing column `xi`".into()))?;
    let p = table.column("p").ok_or_else(|| bad("missing column `p`".into()))?;
    if xi.len() < 2 {
        return Err(bad("need at least two rows".into()));
    }
    let n = xi.len();
    let dx = (xi[n - 1] - xi[0]) / (n - 1) as f64;
    let grid = LogGrid::new(xi[0] - 0.5 * dx, xi[n - 1] + 0.5 * dx, n)?;
    let mut f = GridField::zeros(grid, frag_core::LeftBoundary::AbsorbLeft);
    f.values = p;
    Ok(f)
}

pub fn compare(a: &Path, b: &Path) -> Result<Outcome, CliError> {
    let (fa, fb) = (read_density(a)?, read_density(b)?);
    let m = compare_densities(&fa, &fb)?;
    Ok(Outcome::ok(serde_json::to_string(&m).expect("metrics serialise")))
}

pub fn lindblad(ctx: &Context) -> Result<Outcome, CliError> {
    let s = &ctx.config.solver;
    let grid = LogGrid::new(s.xi_min, s.xi_max, ctx.config.lindblad.n)?;
    let report: LindbladReport = check_lindblad(&ctx.process()?, &grid)?;
    let stdout = to_json_with_meta(&ctx.meta("check-lindblad"), &report);
    let failure = (!report.pass).then(|| "Lindblad diagonal action differs from the jump generator".to_string());
    Ok(Outcome { stdout, failure })
}
