//! Experiment drivers: trajectories, convergence sweeps, one-step
//! boundary scans and divergence batches.
//!
//! Everything here is deterministic for a fixed configuration. Cells and
//! trials run in parallel on the global rayon pool, and every reduction is
//! a max, a count or an in-order collect, so thread count never changes the
//! output.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::{recursion_coeffs, state_parameter, CertKind, Certificate};
use crate::error::{domain, Error, Result};
use crate::rng::Sampler;
use crate::zoo::{normalize, Family, Problem};

pub const DEFAULT_DIVERGENCE: f64 = 1e6;
pub const DEFAULT_PASS_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Cell {
    Pass { pass: bool, worst: f64 },
    Converged { converged: bool },
    Scalar { value: f64 },
}

/// Grid of cells stored row-major over `(y, x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub x_label: String,
    pub y_label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub cells: Vec<Cell>,
}

impl Heatmap {
    pub fn get(&self, ix: usize, iy: usize) -> &Cell {
        &self.cells[iy * self.x.len() + ix]
    }

    pub fn x_index(&self, value: f64) -> Result<usize> {
        axis_index(&self.x, value)
    }

    pub fn y_index(&self, value: f64) -> Result<usize> {
        axis_index(&self.y, value)
    }

    pub fn passes(&self, ix: usize, iy: usize) -> bool {
        matches!(self.get(ix, iy), Cell::Pass { pass: true, .. })
    }

    pub fn count_true(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c, Cell::Pass { pass: true, .. } | Cell::Converged { converged: true }))
            .count()
    }
}

fn axis_index(axis: &[f64], value: f64) -> Result<usize> {
    axis.iter()
        .position(|v| (v - value).abs() <= 1e-9 * (1.0 + value.abs()))
        .ok_or(Error::Lookup(value))
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// `lo, lo + step, …` up to `hi`, snapped to 12 decimals so that grids
/// written as decimals (0.05, 0.15, …) come out as the nearest doubles.
pub fn grid_step(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| ((lo + step * i as f64) * 1e12).round() / 1e12).collect()
}

// ---------------------------------------------------------------------------
// trajectories

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOptions {
    /// Certificate tracked along the path; `None` disables δ_t.
    pub cert: Option<CertKind>,
    /// Lower bracket for the state parameter solver.
    pub lo: f64,
    pub divergence_threshold: f64,
}

impl TrajectoryOptions {
    pub fn for_problem(problem: &Problem) -> Self {
        TrajectoryOptions {
            cert: CertKind::for_family(&problem.family),
            lo: 1e-6,
            divergence_threshold: DEFAULT_DIVERGENCE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub x: Vec<f64>,
    pub l: f64,
    pub g: f64,
    pub n: f64,
    pub sqnorm: f64,
    /// NaN when uncertified, 2 when terminal.
    pub delta: f64,
    pub terminal: bool,
    /// `R_t(δ_t)`, NaN when δ_t is unavailable or terminal.
    pub remainder: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub diverged_at: Option<usize>,
}

impl Trajectory {
    pub fn deltas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.delta).collect()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.l).collect()
    }
}

fn record(problem: &Problem, opts: &TrajectoryOptions, t: usize, x: &[f64]) -> Result<TrajectoryRecord> {
    let obs = problem.observables(x)?;
    let (mut delta, mut terminal, mut remainder) = (f64::NAN, false, f64::NAN);
    if let Some(kind) = opts.cert {
        if x.iter().all(|c| c.is_finite()) {
            let (np, nx) = normalize(problem, x)?;
            if let Ok(sp) = state_parameter(kind, &nx, opts.lo) {
                delta = sp.delta;
                terminal = sp.terminal;
                if !sp.terminal {
                    if let Ok(c) = recursion_coeffs(kind, sp.delta, &np, &nx) {
                        remainder = c.r;
                    }
                }
            }
        }
    }
    Ok(TrajectoryRecord {
        t,
        x: x.to_vec(),
        l: obs.l,
        g: obs.g,
        n: obs.n,
        sqnorm: obs.sqnorm,
        delta,
        terminal,
        remainder,
    })
}

/// Runs `steps` GD steps from `x0`, recording `t = 0..=steps`. Recording
/// stops early once the squared norm exceeds the divergence threshold.
pub fn run_trajectory(problem: &Problem, x0: &[f64], steps: usize, opts: &TrajectoryOptions) -> Result<Trajectory> {
    problem.family.check(x0)?;
    let mut records = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    let mut y = vec![0.0; x.len()];
    let mut diverged_at = None;
    for t in 0..=steps {
        let rec = record(problem, opts, t, &x)?;
        let blown = !(rec.sqnorm <= opts.divergence_threshold);
        records.push(rec);
        if blown {
            diverged_at = Some(t);
            break;
        }
        if t < steps {
            problem.step_into(&x, &mut y);
            std::mem::swap(&mut x, &mut y);
        }
    }
    Ok(Trajectory { records, diverged_at })
}

// ---------------------------------------------------------------------------
// convergence sweeps

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub problem: Problem,
    pub half_width: f64,
    pub resolution: usize,
    /// Fixed `(u, v)` for the four-coordinate families.
    pub offsignal: (f64, f64),
    pub steps: usize,
    pub conv_tol: f64,
    pub overlay: Option<Certificate>,
}

impl SweepConfig {
    pub fn new(problem: Problem) -> Self {
        let conv_tol = match problem.family {
            Family::Quartic { .. } => 1e-4,
            _ => 1e-2,
        };
        SweepConfig {
            problem,
            half_width: 2.5,
            resolution: 200,
            offsignal: (0.0, 0.0),
            steps: 400,
            conv_tol,
            overlay: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return domain("resolution must be at least 2");
        }
        if self.steps < 1 {
            return domain("steps must be at least 1");
        }
        if !(self.conv_tol > 0.0) {
            return domain("conv_tol must be positive");
        }
        if !(self.half_width > 0.0) {
            return domain("half_width must be positive");
        }
        match self.problem.family.dim() {
            2 | 4 if !matches!(self.problem.family, Family::ScalarVector { .. }) => Ok(()),
            _ => Err(Error::Unsupported(format!(
                "sweeps cover the (a,b) and (a,b,u,v) families, not {}",
                self.problem.family.name()
            ))),
        }
    }

    pub fn axis(&self) -> Vec<f64> {
        linspace(-self.half_width, self.half_width, self.resolution)
    }

    pub fn initial_point(&self, a0: f64, b0: f64) -> Vec<f64> {
        if self.problem.family.dim() == 2 {
            vec![a0, b0]
        } else {
            vec![a0, b0, self.offsignal.0, self.offsignal.1]
        }
    }
}

/// Convergence test on the final iterate.
pub fn classify_converged(family: &Family, x: &[f64], tol: f64) -> bool {
    let ab = x[0] * x[1];
    match *family {
        Family::Scalar { sigma } => (sigma - ab).abs() < tol,
        Family::Quartic { .. } => (ab - 1.0).abs() < tol,
        _ => x[2] * x[2] + x[3] * x[3] < tol && (1.0 - ab).abs() < tol,
    }
}

pub fn sweep_convergence_region(cfg: &SweepConfig) -> Result<Heatmap> {
    cfg.validate()?;
    let axis = cfg.axis();
    let n = axis.len();
    let cells: Vec<Cell> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (iy, ix) = (k / n, k % n);
            let mut x = cfg.initial_point(axis[ix], axis[iy]);
            let mut y = vec![0.0; x.len()];
            for _ in 0..cfg.steps {
                cfg.problem.step_into(&x, &mut y);
                std::mem::swap(&mut x, &mut y);
            }
            Cell::Converged { converged: classify_converged(&cfg.problem.family, &x, cfg.conv_tol) }
        })
        .collect();
    Ok(Heatmap { x_label: "a0".into(), y_label: "b0".into(), x: axis.clone(), y: axis, cells })
}

// ---------------------------------------------------------------------------
// boundary scans

/// Grid points of `[−1, 1]^dim` with at least one coordinate at ±1, in
/// lexicographic index order. Each grid point appears once, so the count is
/// `res^dim − (res − 2)^dim`. Returned flat with stride `dim`.
pub fn linf_sphere_grid(dim: usize, res: usize) -> Vec<f64> {
    assert!(res >= 2 && dim >= 1);
    let vals = linspace(-1.0, 1.0, res);
    let total = res.pow(dim as u32);
    let mut out = Vec::with_capacity(dim * (total - (res - 2).pow(dim as u32)));
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        if idx.iter().any(|&i| i == 0 || i == res - 1) {
            out.extend(idx.iter().map(|&i| vals[i]));
        }
        for k in (0..dim).rev() {
            idx[k] += 1;
            if idx[k] < res {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

/// Scales `d` onto the level set `I = 0`. Returns `None` when the quadratic
/// part is not positive along `d`, so the ray never crosses.
pub fn project_direction_to_level_set(cert: &Certificate, d: &[f64]) -> Result<Option<Vec<f64>>> {
    cert.validate()?;
    cert.check_layout(d.len())?;
    let inf = d.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if (inf - 1.0).abs() > 1e-12 {
        return domain(format!("direction must have unit sup-norm, got {inf}"));
    }
    Ok(project_unchecked(cert, d).map(|t| d.iter().map(|c| c * t).collect()))
}

fn project_unchecked(cert: &Certificate, d: &[f64]) -> Option<f64> {
    let q = cert.quadratic_unchecked(d);
    if q > 0.0 {
        Some((-cert.shift() / q).sqrt())
    } else {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScanTarget {
    /// x = δ, y = ξ for diag(1,σ) under the two-parameter certificate.
    TwoParam { sigma: f64, eta: f64 },
    /// x = η, y = δ for a polynomial certificate on a family.
    EtaDelta { family: Family, kind: CertKind },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryScanConfig {
    pub target: ScanTarget,
    pub x_axis: Vec<f64>,
    pub y_axis: Vec<f64>,
    /// Grid points per cube edge.
    pub resolution: usize,
    pub pass_tol: f64,
}

impl BoundaryScanConfig {
    fn cell(&self, ix: usize, iy: usize) -> Result<(Certificate, Problem)> {
        let (xv, yv) = (self.x_axis[ix], self.y_axis[iy]);
        match self.target {
            ScanTarget::TwoParam { sigma, eta } => Ok((
                Certificate::TwoParam { delta: xv, xi: yv, sigma },
                Problem::new(Family::DiagOneSigma { sigma }, eta)?,
            )),
            ScanTarget::EtaDelta { family, kind } => Ok((kind.at(yv), Problem::new(family, xv)?)),
        }
    }

    pub fn dim(&self) -> usize {
        match self.target {
            ScanTarget::TwoParam { .. } => 4,
            ScanTarget::EtaDelta { family, .. } => family.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return domain("direction resolution must be at least 2");
        }
        if !(self.pass_tol > 0.0) {
            return domain("pass_tol must be positive");
        }
        if self.x_axis.is_empty() || self.y_axis.is_empty() {
            return domain("scan axes must be nonempty");
        }
        for ix in 0..self.x_axis.len() {
            for iy in 0..self.y_axis.len() {
                let (cert, problem) = self.cell(ix, iy)?;
                cert.validate()?;
                if cert.delta() >= 2.0 {
                    return domain("delta grid must stay strictly below 2");
                }
                cert.check_layout(problem.dim())?;
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> (&'static str, &'static str) {
        match self.target {
            ScanTarget::TwoParam { .. } => ("delta", "xi"),
            ScanTarget::EtaDelta { .. } => ("eta", "delta"),
        }
    }
}

/// Worst post-step certificate value over projected boundary directions.
/// `NEG_INFINITY` when no direction crosses the level set.
pub fn worst_post_step(cert: &Certificate, problem: &Problem, dirs: &[f64]) -> f64 {
    let dim = problem.dim();
    let mut x = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    let mut worst = f64::NEG_INFINITY;
    for d in dirs.chunks_exact(dim) {
        if let Some(t) = project_unchecked(cert, d) {
            for (xi, di) in x.iter_mut().zip(d) {
                *xi = di * t;
            }
            problem.step_into(&x, &mut y);
            let v = cert.eval_unchecked(&y);
            // NaN from overflow counts as a violation
            worst = if v.is_nan() { f64::INFINITY } else { worst.max(v) };
        }
    }
    worst
}

pub fn boundary_inward_scan(cfg: &BoundaryScanConfig) -> Result<Heatmap> {
    cfg.validate()?;
    let dirs = linf_sphere_grid(cfg.dim(), cfg.resolution);
    let nx = cfg.x_axis.len();
    let cells: Vec<Cell> = (0..nx * cfg.y_axis.len())
        .into_par_iter()
        .map(|k| {
            let (cert, problem) = cfg.cell(k % nx, k / nx).expect("validated");
            let worst = worst_post_step(&cert, &problem, &dirs);
            Cell::Pass { pass: worst <= cfg.pass_tol, worst }
        })
        .collect();
    let (xl, yl) = cfg.labels();
    Ok(Heatmap {
        x_label: xl.into(),
        y_label: yl.into(),
        x: cfg.x_axis.clone(),
        y: cfg.y_axis.clone(),
        cells,
    })
}

/// Smallest passing y-value in the column at `x_value`, if any.
pub fn extract_threshold(h: &Heatmap, x_value: f64) -> Result<Option<f64>> {
    let ix = h.x_index(x_value)?;
    Ok((0..h.y.len()).find(|&iy| h.passes(ix, iy)).map(|iy| h.y[iy]))
}

// ---------------------------------------------------------------------------
// trajectory batches

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rescaled {
    pub point: Vec<f64>,
    pub scale: f64,
    /// Set when 60 halvings did not reach the interior.
    pub underflow: bool,
}

/// Largest dyadic scale `s ∈ (0, 1]` with `I(s·x) < −1e−9`.
pub fn rescale_into_certificate(cert: &Certificate, x: &[f64]) -> Result<Rescaled> {
    cert.validate()?;
    cert.check_layout(x.len())?;
    let mut s = 1.0;
    for _ in 0..=60 {
        let p: Vec<f64> = x.iter().map(|c| c * s).collect();
        if cert.eval_unchecked(&p) < -1e-9 {
            return Ok(Rescaled { point: p, scale: s, underflow: false });
        }
        s *= 0.5;
    }
    let s = 0.5f64.powi(60);
    Ok(Rescaled { point: x.iter().map(|c| c * s).collect(), scale: s, underflow: true })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitDistribution {
    GaussianIso { std: f64 },
    GaussianRescaled { std: f64, cert: Certificate },
    Fixed { point: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBatchConfig {
    pub problem: Problem,
    pub init: InitDistribution,
    pub trials: usize,
    pub steps: usize,
    pub seed: u64,
    pub divergence_threshold: f64,
}

/// Initial point of one trial, drawn from its own seeded stream.
pub fn initial_point(cfg: &TrajectoryBatchConfig, trial: usize) -> Result<Vec<f64>> {
    let dim = cfg.problem.dim();
    match &cfg.init {
        InitDistribution::GaussianIso { std } => Ok(Sampler::for_trial(cfg.seed, trial as u64).normal_vec(dim, *std)),
        InitDistribution::GaussianRescaled { std, cert } => {
            let x = Sampler::for_trial(cfg.seed, trial as u64).normal_vec(dim, *std);
            Ok(rescale_into_certificate(cert, &x)?.point)
        }
        InitDistribution::Fixed { point } => {
            cfg.problem.family.check(point)?;
            Ok(point.clone())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub max_sqnorm: f64,
    /// First step whose squared norm exceeds the threshold.
    pub blowup_step: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub trials: Vec<TrialOutcome>,
    pub bounded: usize,
    pub diverged: usize,
    pub median_blowup: Option<f64>,
}

pub fn run_divergence_experiment(cfg: &TrajectoryBatchConfig) -> Result<DivergenceReport> {
    if cfg.trials < 1 {
        return domain("trials must be at least 1");
    }
    let outcomes: Result<Vec<TrialOutcome>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut x = initial_point(cfg, trial)?;
            let mut y = vec![0.0; x.len()];
            let mut max_sqnorm: f64 = 0.0;
            let mut blowup_step = None;
            for t in 0..=cfg.steps {
                let s: f64 = x.iter().map(|c| c * c).sum();
                max_sqnorm = if s.is_nan() { f64::INFINITY } else { max_sqnorm.max(s) };
                if !(s <= cfg.divergence_threshold) {
                    blowup_step = Some(t);
                    break;
                }
                if t < cfg.steps {
                    cfg.problem.step_into(&x, &mut y);
                    std::mem::swap(&mut x, &mut y);
                }
            }
            Ok(TrialOutcome { trial, max_sqnorm, blowup_step })
        })
        .collect();
    let trials = outcomes?;
    let mut steps: Vec<usize> = trials.iter().filter_map(|t| t.blowup_step).collect();
    steps.sort_unstable();
    let median_blowup = match steps.len() {
        0 => None,
        n if n % 2 == 1 => Some(steps[n / 2] as f64),
        n => Some(0.5 * (steps[n / 2 - 1] + steps[n / 2]) as f64),
    };
    Ok(DivergenceReport {
        bounded: trials.len() - steps.len(),
        diverged: steps.len(),
        trials,
        median_blowup,
    })
}
