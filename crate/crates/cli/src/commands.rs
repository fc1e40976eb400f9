//! One function per subcommand. Each reads its resolved config, writes its
//! data files into `out`, and returns the file names it produced.

use std::path::{Path, PathBuf};

use certlab_core::certificate::{delta_threshold, CertKind};
use certlab_core::scan::{self, BoundaryScanConfig, Cell, Heatmap, InitDistribution, ScanTarget, SweepConfig};
use certlab_core::terminal;
use certlab_core::{suite, Family, Problem};
use serde_json::{json, Value};

use crate::config::{invalid, key, required, Config, ConfigError, KeySpec};
use crate::output::{self, num};
use crate::render;
use crate::CliError;

pub struct Subcommand {
    pub name: &'static str,
    pub about: &'static str,
    pub keys: &'static [KeySpec],
    pub run: fn(&Config, &Path) -> Result<Outcome, CliError>,
}

#[derive(Default)]
pub struct Outcome {
    pub files: Vec<String>,
    pub seed: Option<u64>,
    /// Set by `verify` when a check fails.
    pub failed: bool,
}

const FAMILY_KEYS: [KeySpec; 5] = [
    key("family", "scalar", "scalar | scalar_vector | rank1 | approx | diag | quartic"),
    key("sigma", "1", "target entry for scalar and diag"),
    key("d", "2", "vector length for scalar_vector"),
    key("n", "3", "matrix size for approx"),
    key("mu", "0", "quartic weight"),
];

const IMAGE_KEYS: [KeySpec; 2] = [
    key("image", "false", "also write heatmap.ppm and heatmap.svg"),
    key("pixels", "4", "image pixels per grid cell"),
];

macro_rules! keys {
    ($($part:expr),* $(,)?) => {{
        const PARTS: &[&[KeySpec]] = &[$($part),*];
        const N: usize = { let mut n = 0; let mut i = 0; while i < PARTS.len() { n += PARTS[i].len(); i += 1; } n };
        const KEYS: [KeySpec; N] = {
            let mut out = [KeySpec { key: "", default: None, help: "" }; N];
            let (mut k, mut i) = (0, 0);
            while i < PARTS.len() {
                let mut j = 0;
                while j < PARTS[i].len() { out[k] = PARTS[i][j]; k += 1; j += 1; }
                i += 1;
            }
            out
        };
        &KEYS
    }};
}

pub const SUBCOMMANDS: &[Subcommand] = &[
    Subcommand {
        name: "trajectory",
        about: "Run GD from one point and record residuals, noise and the state parameter",
        keys: keys!(
            &FAMILY_KEYS,
            &[
                key("eta", "0.5", "step size"),
                required("x0", "initial point, comma separated in the family layout"),
                key("steps", "100", "number of GD steps"),
                key("cert", "auto", "tracked certificate: auto | none | sc | fac | apx | sv"),
                key("lo", "1e-6", "lower bracket for the state parameter"),
                key("divergence_threshold", "1e6", "stop once the squared norm exceeds this"),
                key("out", "certlab-out/trajectory", "output directory"),
            ],
        ),
        run: trajectory,
    },
    Subcommand {
        name: "sweep",
        about: "Classify a grid of initial (a0, b0) by whether GD converges",
        keys: keys!(
            &FAMILY_KEYS,
            &[
                key("eta", "0.5", "step size"),
                key("half_width", "2.5", "grid covers [-A, A] on both axes"),
                key("resolution", "200", "grid points per axis"),
                key("u0", "0", "fixed initial u for four-coordinate families"),
                key("v0", "0", "fixed initial v for four-coordinate families"),
                key("steps", "400", "GD steps per cell"),
                key("conv_tol", "auto", "convergence tolerance; auto is 1e-4 for quartic, 1e-2 otherwise"),
                key("overlay", "none", "certificate contour: none | eta | a delta value"),
                key("out", "certlab-out/sweep", "output directory"),
            ],
            &IMAGE_KEYS,
        ),
        run: sweep,
    },
    Subcommand {
        name: "scan-xi",
        about: "Boundary-inward scan of the two-parameter certificate over (delta, xi) for diag(1, sigma)",
        keys: keys!(
            &[
                key("sigma", "0.5", "second diagonal entry, in (0,1)"),
                key("eta", "0.2", "step size"),
                key("delta_min", "0.05", "first delta"),
                key("delta_max", "1.95", "last delta"),
                key("delta_step", "0.1", "delta spacing"),
                key("xi_min", "0.05", "first xi"),
                key("xi_max", "6", "xi grid stops below min(xi_max, 2/sigma)"),
                key("xi_step", "0.1", "xi spacing"),
                key("resolution", "41", "direction grid points per cube edge"),
                key("pass_tol", "1e-4", "a cell passes when every post-step value is at most this"),
                key("out", "certlab-out/scan-xi", "output directory"),
            ],
            &IMAGE_KEYS,
        ),
        run: scan_xi,
    },
    Subcommand {
        name: "scan-quartic",
        about: "Boundary-inward scan of the scalar certificate over (eta, delta) for the quartic loss",
        keys: keys!(
            &[
                key("mu", "0.25", "quartic weight"),
                key("eta_min", "0.05", "first eta"),
                key("eta_max", "1.95", "last eta"),
                key("eta_step", "0.05", "eta spacing"),
                key("delta_min", "0.05", "first delta"),
                key("delta_max", "1.95", "last delta"),
                key("delta_step", "0.05", "delta spacing"),
                key("resolution", "2001", "direction grid points per square edge"),
                key("pass_tol", "1e-4", "a cell passes when every post-step value is at most this"),
                key("out", "certlab-out/scan-quartic", "output directory"),
            ],
            &IMAGE_KEYS,
        ),
        run: scan_quartic,
    },
    Subcommand {
        name: "diverge",
        about: "Seeded batch of GD runs counting bounded and diverging trajectories",
        keys: keys!(&[
            key("family", "rank1", "rank1 (alias factorization) | approx"),
            key("n", "3", "matrix size for approx"),
            key("eta", "1.2", "step size"),
            key("trials", "100", "number of runs"),
            key("steps", "600", "GD steps per run"),
            key("seed", "107", "base seed; run k uses seed xor k"),
            key("init", "auto", "auto | gaussian | rescaled; auto is gaussian for approx with eta >= 1, rescaled otherwise"),
            key("std", "auto", "Gaussian scale; auto is 1 for rescaled, 0.01 for gaussian"),
            key("cert_delta", "auto", "delta of the certificate for rescaled starts; auto is eta for rank1, delta_th(eta) for approx"),
            key("divergence_threshold", "1e6", "a run diverges once its squared norm exceeds this"),
            key("out", "certlab-out/diverge", "output directory"),
        ]),
        run: diverge,
    },
    Subcommand {
        name: "reduced",
        about: "Orbit of the reduced residual map and its 2-cycle table",
        keys: keys!(&[
            key("eta", "1.5", "step size of the orbit"),
            key("l0", "0.3", "initial residual"),
            key("steps", "200", "orbit length"),
            key("etas", "1.1,1.2,1.3,1.4,1.5,1.6,1.7,1.8,1.9", "step sizes for the cycle table"),
            key("out", "certlab-out/reduced", "output directory"),
        ]),
        run: reduced,
    },
    Subcommand {
        name: "verify",
        about: "Run the identity and property suite and print a pass/fail table",
        keys: keys!(&[key("out", "certlab-out/verify", "output directory")]),
        run: verify,
    },
];

pub fn find(name: &str) -> Option<&'static Subcommand> {
    SUBCOMMANDS.iter().find(|s| s.name == name)
}

/// Core errors raised while building inputs are reported against `key`.
fn at<T>(key: &str, cfg: &Config, r: certlab_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Config(invalid(key, cfg.str(key), e.to_string())))
}

fn family(cfg: &Config) -> Result<Family, CliError> {
    let name = cfg.str("family");
    let f = match name {
        "scalar" => Family::Scalar { sigma: cfg.f64("sigma")? },
        "scalar_vector" => Family::ScalarVector { d: cfg.usize("d")? },
        "rank1" | "factorization" => Family::Rank1,
        "approx" => Family::Approx { n: cfg.usize("n")? },
        "diag" => Family::DiagOneSigma { sigma: cfg.f64("sigma")? },
        "quartic" => Family::Quartic { mu: cfg.f64("mu")? },
        other => return Err(invalid("family", other, "unknown family").into()),
    };
    if let Err(e) = f.validate() {
        let k = match f {
            Family::Scalar { .. } | Family::DiagOneSigma { .. } => "sigma",
            Family::ScalarVector { .. } => "d",
            Family::Approx { .. } => "n",
            Family::Quartic { .. } => "mu",
            Family::Rank1 => "family",
        };
        return Err(invalid(k, cfg.str(k), e.to_string()).into());
    }
    Ok(f)
}

fn problem(cfg: &Config, family: Family) -> Result<Problem, CliError> {
    at("eta", cfg, Problem::new(family, cfg.f64("eta")?))
}

fn positive(cfg: &Config, k: &str) -> Result<f64, CliError> {
    let v = cfg.f64(k)?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid(k, cfg.str(k), "must be positive and finite").into());
    }
    Ok(v)
}

fn at_least(cfg: &Config, k: &str, min: usize) -> Result<usize, CliError> {
    let v = cfg.usize(k)?;
    if v < min {
        return Err(invalid(k, cfg.str(k), format!("must be at least {min}")).into());
    }
    Ok(v)
}

fn cert_kind(name: &str) -> Option<CertKind> {
    [CertKind::Sc, CertKind::Fac, CertKind::Apx, CertKind::Sv].into_iter().find(|k| k.name() == name)
}

fn axis(cfg: &Config, prefix: &str) -> Result<Vec<f64>, CliError> {
    let (lo_k, hi_k, step_k) = (format!("{prefix}_min"), format!("{prefix}_max"), format!("{prefix}_step"));
    let lo = positive(cfg, &lo_k)?;
    let hi = cfg.f64(&hi_k)?;
    let step = positive(cfg, &step_k)?;
    if hi < lo {
        return Err(invalid(&hi_k, cfg.str(&hi_k), format!("below {lo_k}")).into());
    }
    Ok(scan::grid_step(lo, hi, step))
}

fn file(out: &Path, name: &str) -> PathBuf {
    out.join(name)
}

fn images(cfg: &Config, h: &Heatmap, contour: &[render::Segment], out: &Path, files: &mut Vec<String>) -> Result<(), CliError> {
    if !cfg.bool("image")? {
        return Ok(());
    }
    let px = at_least(cfg, "pixels", 1)?;
    render::write_ppm(h, contour, px, &file(out, "heatmap.ppm"))?;
    render::write_svg(h, contour, px, &file(out, "heatmap.svg"))?;
    files.extend(["heatmap.ppm".into(), "heatmap.svg".into()]);
    Ok(())
}

fn trajectory(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let fam = family(cfg)?;
    let p = problem(cfg, fam)?;
    let x0 = cfg.f64_list("x0")?;
    at("x0", cfg, fam.check(&x0))?;
    let mut opts = scan::TrajectoryOptions::for_problem(&p);
    opts.cert = match cfg.str("cert") {
        "auto" => opts.cert,
        "none" => None,
        name => {
            let k = cert_kind(name).ok_or_else(|| invalid("cert", name, "unknown certificate"))?;
            at("cert", cfg, k.at(1.0).check_layout(fam.dim()))?;
            Some(k)
        }
    };
    opts.lo = positive(cfg, "lo")?;
    opts.divergence_threshold = positive(cfg, "divergence_threshold")?;
    let steps = cfg.usize("steps")?;
    let t = scan::run_trajectory(&p, &x0, steps, &opts)?;

    output::write_trajectory_csv(&t.records, &output::coordinate_names(&fam), &file(out, "trajectory.csv"))?;
    let last = t.records.last().expect("t = 0 is always recorded");
    let summary = json!({
        "family": fam.name(),
        "eta": p.eta,
        "steps_recorded": t.records.len() - 1,
        "diverged_at": t.diverged_at,
        "final_residual": num(last.l),
        "final_delta": num(last.delta),
        "terminal": last.terminal,
    });
    output::write_json(&file(out, "summary.json"), &summary)?;
    println!(
        "{} steps, final L = {}, delta = {}{}",
        t.records.len() - 1,
        output::fmt_f64(last.l),
        output::fmt_f64(last.delta),
        t.diverged_at.map_or(String::new(), |s| format!(", diverged at t = {s}"))
    );
    Ok(Outcome { files: vec!["trajectory.csv".into(), "summary.json".into()], ..Outcome::default() })
}

fn sweep(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let fam = family(cfg)?;
    let mut sc = SweepConfig::new(problem(cfg, fam)?);
    sc.half_width = positive(cfg, "half_width")?;
    sc.resolution = at_least(cfg, "resolution", 2)?;
    sc.offsignal = (cfg.f64("u0")?, cfg.f64("v0")?);
    sc.steps = at_least(cfg, "steps", 1)?;
    if cfg.str("conv_tol") != "auto" {
        sc.conv_tol = positive(cfg, "conv_tol")?;
    }
    sc.overlay = match cfg.str("overlay") {
        "none" => None,
        v => {
            let kind = CertKind::for_family(&fam)
                .ok_or_else(|| invalid("overlay", v, format!("{} has no polynomial certificate", fam.name())))?;
            let delta = if v == "eta" { sc.problem.eta } else { cfg.f64("overlay")? };
            let c = kind.at(delta);
            at("overlay", cfg, c.validate())?;
            Some(c)
        }
    };
    at("family", cfg, sc.validate())?;
    let h = scan::sweep_convergence_region(&sc)?;
    let mut files = vec!["heatmap.csv".to_string()];
    output::write_heatmap_csv(&h, &file(out, "heatmap.csv"))?;

    let contour = match sc.overlay {
        Some(c) => {
            let field: Vec<f64> = (0..h.y.len())
                .flat_map(|iy| (0..h.x.len()).map(move |ix| (ix, iy)))
                .map(|(ix, iy)| c.eval_unchecked(&sc.initial_point(h.x[ix], h.y[iy])))
                .collect();
            let overlay = Heatmap {
                x_label: h.x_label.clone(),
                y_label: h.y_label.clone(),
                x: h.x.clone(),
                y: h.y.clone(),
                cells: field.iter().map(|&value| Cell::Scalar { value }).collect(),
            };
            output::write_heatmap_csv(&overlay, &file(out, "overlay.csv"))?;
            files.push("overlay.csv".into());
            render::marching_squares(&field, h.x.len(), h.y.len())
        }
        None => Vec::new(),
    };
    images(cfg, &h, &contour, out, &mut files)?;
    println!("{}/{} cells converged", h.count_true(), h.cells.len());
    Ok(Outcome { files, ..Outcome::default() })
}

fn boundary(cfg: &Config, out: &Path, bc: BoundaryScanConfig) -> Result<(Heatmap, Vec<String>), CliError> {
    at("resolution", cfg, bc.validate())?;
    let h = scan::boundary_inward_scan(&bc)?;
    output::write_heatmap_csv(&h, &file(out, "heatmap.csv"))?;
    let mut files = vec!["heatmap.csv".to_string()];
    images(cfg, &h, &[], out, &mut files)?;
    Ok((h, files))
}

fn scan_xi(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let sigma = cfg.f64("sigma")?;
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(invalid("sigma", cfg.str("sigma"), "must lie in (0,1)").into());
    }
    let eta = positive(cfg, "eta")?;
    let deltas = axis(cfg, "delta")?;
    if deltas.iter().any(|&d| d >= 2.0) {
        return Err(invalid("delta_max", cfg.str("delta_max"), "delta must stay below 2").into());
    }
    let top = cfg.f64("xi_max")?.min(2.0 / sigma);
    let xis: Vec<f64> = axis(cfg, "xi")?.into_iter().filter(|&x| x < top && x * sigma < 2.0).collect();
    if xis.is_empty() {
        return Err(invalid("xi_min", cfg.str("xi_min"), "no xi below min(xi_max, 2/sigma)").into());
    }
    let bc = BoundaryScanConfig {
        target: ScanTarget::TwoParam { sigma, eta },
        x_axis: deltas,
        y_axis: xis,
        resolution: at_least(cfg, "resolution", 2)?,
        pass_tol: positive(cfg, "pass_tol")?,
    };
    let (h, files) = boundary(cfg, out, bc)?;
    println!("{}/{} cells pass", h.count_true(), h.cells.len());
    Ok(Outcome { files, ..Outcome::default() })
}

fn scan_quartic(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let mu = cfg.f64("mu")?;
    if !mu.is_finite() {
        return Err(invalid("mu", cfg.str("mu"), "must be finite").into());
    }
    let etas = axis(cfg, "eta")?;
    let deltas = axis(cfg, "delta")?;
    if deltas.iter().any(|&d| d >= 2.0) {
        return Err(invalid("delta_max", cfg.str("delta_max"), "delta must stay below 2").into());
    }
    let bc = BoundaryScanConfig {
        target: ScanTarget::EtaDelta { family: Family::Quartic { mu }, kind: CertKind::Sc },
        x_axis: etas.clone(),
        y_axis: deltas,
        resolution: at_least(cfg, "resolution", 2)?,
        pass_tol: positive(cfg, "pass_tol")?,
    };
    let (h, mut files) = boundary(cfg, out, bc)?;
    let rows: Vec<Vec<f64>> = etas
        .iter()
        .map(|&eta| {
            let th = scan::extract_threshold(&h, eta).expect("eta is on the axis");
            vec![eta, th.unwrap_or(f64::NAN)]
        })
        .collect();
    output::write_table_csv(&file(out, "thresholds.csv"), &["eta", "delta_threshold"], &rows)?;
    files.push("thresholds.csv".into());
    let empty = rows.iter().filter(|r| r[1].is_nan()).count();
    println!("{}/{} cells pass, {empty} eta columns without a passing delta", h.count_true(), h.cells.len());
    Ok(Outcome { files, ..Outcome::default() })
}

fn diverge(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let fam = match cfg.str("family") {
        "rank1" | "factorization" => Family::Rank1,
        "approx" => Family::Approx { n: cfg.usize("n")? },
        other => return Err(invalid("family", other, "diverge supports rank1 and approx").into()),
    };
    at("n", cfg, fam.validate())?;
    let p = problem(cfg, fam)?;
    let init = match cfg.str("init") {
        "auto" if fam == Family::Rank1 || p.eta < 1.0 => "rescaled",
        "auto" => "gaussian",
        v @ ("gaussian" | "rescaled") => v,
        other => return Err(invalid("init", other, "expected auto, gaussian or rescaled").into()),
    };
    let std = match cfg.str("std") {
        "auto" if init == "rescaled" => 1.0,
        "auto" => 0.01,
        _ => positive(cfg, "std")?,
    };
    let init = if init == "gaussian" {
        InitDistribution::GaussianIso { std }
    } else {
        let kind = CertKind::for_family(&fam).expect("both families carry a certificate");
        let delta = match cfg.str("cert_delta") {
            "auto" if fam == Family::Rank1 => p.eta,
            "auto" => at("cert_delta", cfg, delta_threshold(p.eta, 1.0))?,
            _ => cfg.f64("cert_delta")?,
        };
        let cert = kind.at(delta);
        at("cert_delta", cfg, cert.validate())?;
        InitDistribution::GaussianRescaled { std, cert }
    };
    let seed = cfg.u64("seed")?;
    let bc = scan::TrajectoryBatchConfig {
        problem: p,
        init,
        trials: at_least(cfg, "trials", 1)?,
        steps: cfg.usize("steps")?,
        seed,
        divergence_threshold: positive(cfg, "divergence_threshold")?,
    };
    let r = scan::run_divergence_experiment(&bc)?;
    let rows: Vec<Vec<f64>> = r
        .trials
        .iter()
        .map(|t| vec![t.trial as f64, t.max_sqnorm, t.blowup_step.map_or(f64::NAN, |s| s as f64)])
        .collect();
    output::write_table_csv(&file(out, "trials.csv"), &["trial", "max_sqnorm", "blowup_step"], &rows)?;
    let report = json!({
        "family": fam.name(),
        "eta": p.eta,
        "trials": r.trials.len(),
        "bounded": r.bounded,
        "diverged": r.diverged,
        "median_blowup": r.median_blowup.map_or(Value::String("nan".into()), num),
    });
    output::write_json(&file(out, "report.json"), &report)?;
    println!(
        "{} bounded, {} diverged, median blow-up step {}",
        r.bounded,
        r.diverged,
        r.median_blowup.map_or("nan".to_string(), |m| m.to_string())
    );
    Ok(Outcome { files: vec!["trials.csv".into(), "report.json".into()], seed: Some(seed), failed: false })
}

fn reduced(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let eta = positive(cfg, "eta")?;
    let l0 = cfg.f64("l0")?;
    let orbit = terminal::orbit(eta, l0, cfg.usize("steps")?);
    let rows: Vec<Vec<f64>> =
        orbit.iter().enumerate().map(|(t, &l)| vec![t as f64, l, 2.0 - 3.0 * l]).collect();
    output::write_table_csv(&file(out, "orbit.csv"), &["t", "l", "sharpness"], &rows)?;

    let etas = cfg.f64_list("etas")?;
    let mut table = Vec::new();
    for &e in &etas {
        let c = terminal::two_cycle(e).map_err(|err| invalid("etas", cfg.str("etas"), err.to_string()))?;
        table.push(vec![
            e,
            c.l_minus,
            c.l_plus,
            c.multiplier,
            terminal::cycle_multiplier(e),
            c.sharp_minus,
            c.sharp_plus,
            c.mean_sharpness(),
            2.0 / e,
        ]);
    }
    output::write_table_csv(
        &file(out, "cycles.csv"),
        &["eta", "l_minus", "l_plus", "multiplier", "multiplier_closed_form", "sharp_minus", "sharp_plus", "mean_sharpness", "two_over_eta"],
        &table,
    )?;
    let tail = orbit.last().copied().unwrap_or(l0);
    println!("orbit of {} steps ends at L = {}; {} cycle rows", orbit.len() - 1, output::fmt_f64(tail), table.len());
    Ok(Outcome { files: vec!["orbit.csv".into(), "cycles.csv".into()], ..Outcome::default() })
}

fn verify(_cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let results = suite::run_suite(crate::SCHEMA_VERSION, crate::TOOL_VERSION);
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut rows = Vec::new();
    for r in &results {
        println!("{}  {:<width$}  {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        rows.push(json!({ "name": r.name, "passed": r.passed, "detail": r.detail }));
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{}/{} checks pass", results.len() - failed, results.len());
    output::write_json(&file(out, "verify.json"), &json!({ "checks": rows, "failed": failed }))?;
    Ok(Outcome { files: vec!["verify.json".into()], seed: None, failed: failed > 0 })
}

pub fn config_error_for_threads(value: &str) -> ConfigError {
    invalid("CERTLAB_THREADS", value, "expected a positive integer")
}
