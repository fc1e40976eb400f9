use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use certlab::output::{read_heatmap_csv, read_trajectory_csv, write_heatmap_csv, write_trajectory_csv};
use certlab::render::marching_squares;
use certlab_core::scan::{linspace, Cell, Heatmap, TrajectoryRecord};
use serde_json::Value;

fn certlab(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_certlab"));
    c.args(args).env_remove("CERTLAB_THREADS");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let o = certlab(args, &[]);
    assert_eq!(o.status.code(), Some(0), "{args:?}\n{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn bits(c: &Cell) -> Vec<u64> {
    match *c {
        Cell::Pass { pass, worst } => vec![pass as u64, worst.to_bits()],
        Cell::Converged { converged } => vec![converged as u64],
        Cell::Scalar { value } => vec![value.to_bits()],
    }
}

#[test]
fn heatmap_csv_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("h.csv");
    let worst = [0.1, -1.0 / 3.0, f64::NAN, f64::NEG_INFINITY, 1e-300, 2.0f64.sqrt()];
    let h = Heatmap {
        x_label: "delta".into(),
        y_label: "xi".into(),
        x: vec![0.05, 0.15, 0.25],
        y: vec![0.1, 0.7],
        cells: worst.iter().enumerate().map(|(k, &w)| Cell::Pass { pass: k % 2 == 0, worst: w }).collect(),
    };
    write_heatmap_csv(&h, &p).unwrap();
    let back = read_heatmap_csv(&p).unwrap();
    assert_eq!((back.x_label.as_str(), back.y_label.as_str()), ("delta", "xi"));
    assert_eq!(back.x, h.x);
    assert_eq!(back.y, h.y);
    assert_eq!(back.cells.iter().map(bits).collect::<Vec<_>>(), h.cells.iter().map(bits).collect::<Vec<_>>());

    let s = Heatmap { cells: worst.iter().map(|&value| Cell::Scalar { value }).collect(), ..h.clone() };
    write_heatmap_csv(&s, &p).unwrap();
    assert_eq!(read_heatmap_csv(&p).unwrap().cells.iter().map(bits).collect::<Vec<_>>(), s.cells.iter().map(bits).collect::<Vec<_>>());
}

#[test]
fn heatmap_rows_are_row_major_over_y_then_x() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("h.csv");
    let h = Heatmap {
        x_label: "a0".into(),
        y_label: "b0".into(),
        x: vec![-1.0, 1.0],
        y: vec![-2.0, 2.0],
        cells: [true, false, false, true].map(|converged| Cell::Converged { converged }).to_vec(),
    };
    write_heatmap_csv(&h, &p).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "ix,iy,a0,b0,converged");
    let idx: Vec<&str> = lines[1..].iter().map(|l| &l[..3]).collect();
    assert_eq!(idx, ["0,0", "1,0", "0,1", "1,1"]);
    assert!(lines[2].starts_with("1,0,1.0000000000000000e0,-2.0000000000000000e0,false"));
}

#[test]
fn trajectory_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    let recs = vec![
        TrajectoryRecord { t: 0, x: vec![0.1, 0.2], l: 0.98, g: -0.05, n: 0.0, sqnorm: 0.05, delta: 0.3, terminal: false, remainder: -1e-17 },
        TrajectoryRecord { t: 1, x: vec![1.0 / 7.0, 3.0], l: 1e300, g: 0.0, n: 0.0, sqnorm: f64::INFINITY, delta: f64::NAN, terminal: true, remainder: f64::NAN },
    ];
    write_trajectory_csv(&recs, &["a".into(), "b".into()], &p).unwrap();
    let back = read_trajectory_csv(&p).unwrap();
    assert_eq!(back[0], recs[0]);
    assert_eq!(back[1].x, recs[1].x);
    assert!(back[1].delta.is_nan() && back[1].remainder.is_nan() && back[1].terminal);
    assert_eq!(back[1].sqnorm, f64::INFINITY);
}

#[test]
fn trajectory_with_zero_steps_has_header_and_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t0");
    ok(&["trajectory", "--x0", "0.3,0.1", "--steps", "0", "--out", out.to_str().unwrap()]);
    let text = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("t,a,b,l,g,n,sqnorm,delta,terminal,remainder\n0,"));
    let recs = read_trajectory_csv(&out.join("trajectory.csv")).unwrap();
    assert_eq!(recs[0].x, vec![0.3, 0.1]);
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e");
    let o = out.to_str().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "eta = 0.4\nwidth = 3\n").unwrap();
    let cases: Vec<(Vec<&str>, Vec<(&str, &str)>, &str)> = vec![
        (vec!["sweep", "--bogus", "1", "--out", o], vec![], "bogus"),
        (vec!["trajectory", "--out", o], vec![], "x0"),
        (vec!["trajectory", "--x0", "1,1", "--eta", "fast", "--out", o], vec![], "eta"),
        (vec!["trajectory", "--x0", "1,1,1", "--out", o], vec![], "x0"),
        (vec!["sweep", "--config", conf.to_str().unwrap(), "--out", o], vec![], "width"),
        (vec!["sweep", "--family", "diag", "--sigma", "1.5", "--out", o], vec![], "sigma"),
        (vec!["diverge", "--family", "scalar", "--out", o], vec![], "family"),
        (vec!["scan-xi", "--resolution", "1", "--out", o], vec![], "resolution"),
        (vec!["reduced", "--etas", "0.5", "--out", o], vec![], "etas"),
        (vec!["verify", "--out", o], vec![("CERTLAB_THREADS", "many")], "CERTLAB_THREADS"),
    ];
    for (args, env, key) in cases {
        let r = certlab(&args, &env);
        let err = String::from_utf8_lossy(&r.stderr);
        assert_eq!(r.status.code(), Some(2), "{args:?}: {err}");
        assert!(err.contains(&format!("`{key}`")), "{args:?}: {err}");
    }
    assert_eq!(certlab(&["no-such-command"], &[]).status.code(), Some(2));
}

#[test]
fn verify_passes_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = ok(&["verify", "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(!stdout.contains("FAIL"), "{stdout}");
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["tool_version"], certlab::TOOL_VERSION);
    assert_eq!(m["schema_version"], certlab::SCHEMA_VERSION);
    assert_eq!(m["subcommand"], "verify");
    assert_eq!(json(&out.join("verify.json"))["failed"], 0);
}

#[test]
fn manifest_config_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    for (sub, data) in [("diverge", "trials.csv"), ("sweep", "heatmap.csv")] {
        let (f, s) = (first.join(sub), second.join(sub));
        let mut args = vec![sub, "--trials", "7", "--seed", "99", "--out", f.to_str().unwrap()];
        if sub == "sweep" {
            args = vec![sub, "--family", "rank1", "--resolution", "12", "--u0", "0.3", "--out", f.to_str().unwrap()];
        }
        ok(&args);
        let m = json(&f.join("manifest.json"));
        if sub == "diverge" {
            assert_eq!(m["seed"], 99);
        }
        // rebuild the run from the manifest echo alone
        let mut again: Vec<String> = vec![sub.into()];
        for (k, v) in m["config"].as_object().unwrap() {
            if k != "out" {
                again.push(format!("--{k}={}", v.as_str().unwrap()));
            }
        }
        again.push(format!("--out={}", s.display()));
        ok(&again.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(fs::read(f.join(data)).unwrap(), fs::read(s.join(data)).unwrap(), "{sub}");

        // and from the resolved config file, under a different thread cap
        let t = dir.path().join("c").join(sub);
        let r = certlab(
            &[sub, "--config", f.join("resolved.conf").to_str().unwrap(), "--out", t.to_str().unwrap()],
            &[("CERTLAB_THREADS", "1")],
        );
        assert_eq!(r.status.code(), Some(0));
        assert_eq!(fs::read(f.join(data)).unwrap(), fs::read(t.join(data)).unwrap(), "{sub}");
    }
}

#[test]
fn scan_xi_diagonal_passes_for_nearly_equal_entries() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("xi");
    let grid = ["--delta_min", "0.25", "--delta_max", "1.75", "--delta_step", "0.3"];
    let mut args = vec!["scan-xi", "--sigma", "0.99", "--eta", "0.2", "--resolution", "9"];
    args.extend(grid);
    args.extend(["--xi_min", "0.25", "--xi_max", "1.8", "--xi_step", "0.3", "--out", out.to_str().unwrap()]);
    ok(&args);
    let h = read_heatmap_csv(&out.join("heatmap.csv")).unwrap();
    assert_eq!((h.x.len(), h.y.len()), (6, 6));
    for (i, &d) in h.x.iter().enumerate() {
        assert_eq!(h.y[i], d);
        assert!(h.passes(i, i), "diagonal delta = xi = {d}");
    }
}

#[test]
fn diverge_approx_blows_up_fast() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    ok(&["diverge", "--family", "approx", "--eta", "1.5", "--trials", "30", "--out", out.to_str().unwrap()]);
    let r = json(&out.join("report.json"));
    assert_eq!(r["diverged"], 30);
    let med = r["median_blowup"].as_f64().unwrap();
    assert!((10.0..=40.0).contains(&med), "{med}");
    let rows = fs::read_to_string(out.join("trials.csv")).unwrap();
    assert_eq!(rows.lines().next(), Some("trial,max_sqnorm,blowup_step"));
    assert_eq!(rows.lines().count(), 31);

    // below the critical step the same family stays bounded from certified starts
    let pre = dir.path().join("pre");
    ok(&["diverge", "--family", "approx", "--eta", "0.9", "--trials", "20", "--out", pre.to_str().unwrap()]);
    assert_eq!(json(&pre.join("report.json"))["bounded"], 20);
}

#[test]
fn nan_is_a_string_in_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    ok(&["diverge", "--family", "rank1", "--eta", "0.5", "--trials", "4", "--steps", "50", "--out", out.to_str().unwrap()]);
    let r = json(&out.join("report.json"));
    assert_eq!(r["bounded"], 4);
    assert_eq!(r["median_blowup"], "nan");
}

/// `I(δ; a, b) = 0` rewritten in the rotated coordinates `p = (a+b)/√2`,
/// `q = (a−b)/√2` as an axis-aligned ellipse.
fn isc_ellipse_residual(delta: f64, a: f64, b: f64) -> f64 {
    let (p, q) = ((a + b) / 2f64.sqrt(), (a - b) / 2f64.sqrt());
    let r = 4.0 - delta * delta;
    p * p * (delta - delta * delta / 2.0) / r + q * q * (delta + delta * delta / 2.0) / r - 1.0
}

#[test]
fn contour_traces_the_closed_form_ellipse() {
    let delta = 0.8;
    let n = 201;
    let ax = linspace(-3.0, 3.0, n);
    let field: Vec<f64> = ax
        .iter()
        .flat_map(|&b| ax.iter().map(move |&a| delta * (a * a + b * b) - delta * delta * a * b + delta * delta - 4.0))
        .collect();
    let segs = marching_squares(&field, n, n);
    assert!(segs.len() > 100);
    let h = ax[1] - ax[0];
    for s in &segs {
        for &(gx, gy) in s {
            let (a, b) = (ax[0] + gx * h, ax[0] + gy * h);
            assert!(isc_ellipse_residual(delta, a, b).abs() < 2e-3, "({a}, {b})");
        }
    }
}

#[test]
fn sweep_overlay_and_images() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    ok(&[
        "sweep", "--family", "rank1", "--eta", "0.8", "--resolution", "16", "--u0", "0.5", "--v0", "-0.25",
        "--overlay", "eta", "--image", "--pixels", "3", "--out", out.to_str().unwrap(),
    ]);
    let ov = read_heatmap_csv(&out.join("overlay.csv")).unwrap();
    for (k, c) in ov.cells.iter().enumerate() {
        let (a, b) = (ov.x[k % 16], ov.y[k / 16]);
        let d = 0.8;
        let want = d * (a * a + b * b + 0.25 + 0.0625) - d * d * a * b + d * d - 4.0;
        let Cell::Scalar { value } = *c else { panic!("overlay cells are scalar") };
        assert!((value - want).abs() < 1e-12 * (1.0 + want.abs()));
    }
    let ppm = fs::read(out.join("heatmap.ppm")).unwrap();
    let header = b"P6\n48 48\n255\n";
    assert_eq!(&ppm[..header.len()], header);
    assert_eq!(ppm.len(), header.len() + 48 * 48 * 3);
    let svg = fs::read_to_string(out.join("heatmap.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<path d=\"M"));
    let m = json(&out.join("manifest.json"));
    let files: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    assert_eq!(files, ["heatmap.csv", "overlay.csv", "heatmap.ppm", "heatmap.svg", "resolved.conf"]);
}

#[test]
fn reduced_cycle_table_matches_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    ok(&["reduced", "--etas", "1.2,1.5", "--steps", "3", "--out", out.to_str().unwrap()]);
    let text = fs::read_to_string(out.join("cycles.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    for r in &rows {
        let eta = r[0];
        // period-2 points that are not fixed points
        for l in [r[1], r[2]] {
            let g = |x: f64| x * (1.0 - eta * (1.0 - x) * (2.0 + eta * x));
            assert!((g(g(l)) - l).abs() < 1e-13 && (g(l) - l).abs() > 1e-3);
        }
        assert!((r[3] - (7.0 - 4.0 * eta - 2.0 * eta * eta)).abs() < 1e-12);
        assert!((r[7] - (eta + 3.0) / (2.0 * eta)).abs() < 1e-14);
        assert!(r[5] > 2.0 / eta && r[6] < 2.0 / eta);
    }
    let orbit = fs::read_to_string(out.join("orbit.csv")).unwrap();
    assert_eq!(orbit.lines().count(), 5);
}

#[test]
fn help_lists_keys_and_exits_0() {
    for args in [vec!["sweep", "--help"], vec!["scan-quartic", "--mu", "0.1", "--help"]] {
        let o = ok(&args);
        let s = String::from_utf8_lossy(&o.stdout);
        assert!(s.contains("resolution") && s.contains("--config FILE"), "{s}");
    }
}
