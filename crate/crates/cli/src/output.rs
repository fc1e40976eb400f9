//! CSV and JSON writers plus the run manifest.
//!
//! Reals are written with 17 significant digits so that reading a file back
//! reproduces the in-memory values bit for bit. Non-finite values are written
//! as `nan`, `inf` and `-inf` in both formats.

use std::fs;
use std::path::{Path, PathBuf};

use certlab_core::scan::{Cell, Heatmap, TrajectoryRecord};
use certlab_core::Family;
use serde_json::{json, Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

pub type Result<T> = std::result::Result<T, OutputError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, msg: impl Into<String>) -> OutputError {
    OutputError::Format { path: path.to_path_buf(), msg: msg.into() }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

/// Shortest round-trip form is not fixed width; 17 significant digits is.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

/// JSON number, or a string for non-finite values.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::String(fmt_f64(x))
    }
}

pub fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).expect("values built from finite numbers and strings");
    text.push('\n');
    write_text(path, &text)
}

fn payload_header(cells: &[Cell]) -> &'static [&'static str] {
    match cells.first() {
        Some(Cell::Pass { .. }) => &["pass", "worst"],
        Some(Cell::Converged { .. }) => &["converged"],
        _ => &["value"],
    }
}

/// Rows ordered row-major over `(y, x)`, matching the cell storage.
pub fn write_heatmap_csv(h: &Heatmap, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["ix", "iy", h.x_label.as_str(), h.y_label.as_str()];
    header.extend(payload_header(&h.cells));
    w.write_record(&header).map_err(csv_err(path))?;
    let nx = h.x.len();
    for (k, c) in h.cells.iter().enumerate() {
        let (ix, iy) = (k % nx, k / nx);
        let mut row = vec![ix.to_string(), iy.to_string(), fmt_f64(h.x[ix]), fmt_f64(h.y[iy])];
        match *c {
            Cell::Pass { pass, worst } => {
                row.push(pass.to_string());
                row.push(fmt_f64(worst));
            }
            Cell::Converged { converged } => row.push(converged.to_string()),
            Cell::Scalar { value } => row.push(fmt_f64(value)),
        }
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_heatmap_csv(path: &Path) -> Result<Heatmap> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(String::from).collect();
    if header.len() < 5 || header[0] != "ix" || header[1] != "iy" {
        return Err(format_err(path, "not a heatmap file"));
    }
    let kind = header[4].clone();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let field = |i: usize| rec.get(i).ok_or_else(|| format_err(path, "short row"));
        let ix: usize = field(0)?.parse().map_err(|_| format_err(path, "bad ix"))?;
        let iy: usize = field(1)?.parse().map_err(|_| format_err(path, "bad iy"))?;
        let real = |i: usize| field(i).and_then(|s| parse_f64(s).ok_or_else(|| format_err(path, "bad number")));
        let flag = |i: usize| field(i).and_then(|s| s.parse::<bool>().map_err(|_| format_err(path, "bad flag")));
        let cell = match kind.as_str() {
            "pass" => Cell::Pass { pass: flag(4)?, worst: real(5)? },
            "converged" => Cell::Converged { converged: flag(4)? },
            "value" => Cell::Scalar { value: real(4)? },
            other => return Err(format_err(path, format!("unknown payload column {other}"))),
        };
        rows.push((ix, iy, real(2)?, real(3)?, cell));
    }
    let nx = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let ny = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if rows.len() != nx * ny {
        return Err(format_err(path, "grid is not rectangular"));
    }
    let mut x = vec![f64::NAN; nx];
    let mut y = vec![f64::NAN; ny];
    let mut cells = vec![Cell::Scalar { value: f64::NAN }; nx * ny];
    for (ix, iy, xv, yv, c) in rows {
        x[ix] = xv;
        y[iy] = yv;
        cells[iy * nx + ix] = c;
    }
    Ok(Heatmap { x_label: header[2].clone(), y_label: header[3].clone(), x, y, cells })
}

/// Column names for a point laid out as the family stores it.
pub fn coordinate_names(family: &Family) -> Vec<String> {
    let indexed = |m: usize| -> Vec<String> {
        let mut n: Vec<String> = (0..m).map(|i| format!("a{i}")).collect();
        n.extend((0..m).map(|i| format!("b{i}")));
        n
    };
    match *family {
        Family::Scalar { .. } | Family::Quartic { .. } => vec!["a".into(), "b".into()],
        Family::Rank1 | Family::DiagOneSigma { .. } => ["a", "b", "u", "v"].map(String::from).to_vec(),
        Family::ScalarVector { d } => indexed(d),
        Family::Approx { n } => {
            let mut names = indexed(n - 1);
            names.push("u".into());
            names.push("v".into());
            names
        }
    }
}

pub fn write_trajectory_csv(records: &[TrajectoryRecord], names: &[String], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header: Vec<&str> = vec!["t"];
    header.extend(names.iter().map(String::as_str));
    header.extend(["l", "g", "n", "sqnorm", "delta", "terminal", "remainder"]);
    w.write_record(&header).map_err(csv_err(path))?;
    for r in records {
        let mut row = vec![r.t.to_string()];
        row.extend(r.x.iter().map(|&v| fmt_f64(v)));
        row.extend([r.l, r.g, r.n, r.sqnorm, r.delta].map(fmt_f64));
        row.push(r.terminal.to_string());
        row.push(fmt_f64(r.remainder));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    let dim = header.len().checked_sub(8).ok_or_else(|| format_err(path, "not a trajectory file"))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let real = |i: usize| rec.get(i).and_then(parse_f64).ok_or_else(|| format_err(path, "bad number"));
        let x = (1..=dim).map(real).collect::<Result<Vec<f64>>>()?;
        let b = dim + 1;
        out.push(TrajectoryRecord {
            t: rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| format_err(path, "bad t"))?,
            x,
            l: real(b)?,
            g: real(b + 1)?,
            n: real(b + 2)?,
            sqnorm: real(b + 3)?,
            delta: real(b + 4)?,
            terminal: rec.get(b + 5).and_then(|s| s.parse().ok()).ok_or_else(|| format_err(path, "bad flag"))?,
            remainder: real(b + 6)?,
        });
    }
    Ok(out)
}

/// Plain numeric table with a header row.
pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row.iter().map(|&v| fmt_f64(v))).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub struct Manifest<'a> {
    pub subcommand: &'a str,
    pub config: &'a crate::config::Config,
    pub seed: Option<u64>,
    pub files: Vec<String>,
}

impl Manifest<'_> {
    pub fn to_json(&self) -> Value {
        let cfg: Map<String, Value> =
            self.config.entries().iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
        let mut argv = vec!["certlab".to_string(), self.subcommand.to_string()];
        for (k, v) in self.config.entries() {
            argv.push(format!("--{k}={v}"));
        }
        json!({
            "tool": "certlab",
            "tool_version": certlab_core::TOOL_VERSION,
            "schema_version": certlab_core::SCHEMA_VERSION,
            "subcommand": self.subcommand,
            "seed": self.seed,
            "config": cfg,
            "command": argv,
            "files": self.files,
        })
    }
}
