//! PPM and SVG renderings of heatmaps, with an optional zero contour.
//!
//! Images put `y` increasing upward. Pass/fail and converged maps use two
//! colors. Scalar fields use a five-stop piecewise-linear palette running
//! dark blue, teal, green, yellow-green, yellow from the minimum to the
//! maximum finite value; NaN cells are grey.

use std::fmt::Write as _;
use std::path::Path;

use certlab_core::scan::{Cell, Heatmap};

use crate::output::{self, Result};

pub type Rgb = [u8; 3];

pub const PASS: Rgb = [46, 125, 50];
pub const FAIL: Rgb = [198, 40, 40];
pub const MISSING: Rgb = [128, 128, 128];
pub const CONTOUR: Rgb = [0, 0, 0];

const STOPS: [Rgb; 5] = [[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]];

/// Palette lookup for `t ∈ [0, 1]`.
pub fn palette(t: f64) -> Rgb {
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let k = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - k as f64;
    let (a, b) = (STOPS[k], STOPS[k + 1]);
    std::array::from_fn(|i| (a[i] as f64 + f * (b[i] as f64 - a[i] as f64)).round() as u8)
}

pub fn cell_colors(h: &Heatmap) -> Vec<Rgb> {
    let finite = h.cells.iter().filter_map(|c| match c {
        Cell::Scalar { value } if value.is_finite() => Some(*value),
        _ => None,
    });
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), v| (l.min(v), u.max(v)));
    h.cells
        .iter()
        .map(|c| match *c {
            Cell::Pass { pass, .. } | Cell::Converged { converged: pass } => {
                if pass {
                    PASS
                } else {
                    FAIL
                }
            }
            Cell::Scalar { value } if value.is_finite() => {
                palette(if hi > lo { (value - lo) / (hi - lo) } else { 0.5 })
            }
            Cell::Scalar { .. } => MISSING,
        })
        .collect()
}

/// Segment in fractional grid coordinates `(ix, iy)`.
pub type Segment = [(f64, f64); 2];

/// Marching squares for the zero level of a row-major `(y, x)` field.
/// Saddle cells are resolved by the sign of the cell-centre mean.
pub fn marching_squares(field: &[f64], nx: usize, ny: usize) -> Vec<Segment> {
    assert_eq!(field.len(), nx * ny);
    let at = |ix: usize, iy: usize| field[iy * nx + ix];
    let mut segs = Vec::new();
    for iy in 0..ny.saturating_sub(1) {
        for ix in 0..nx.saturating_sub(1) {
            // corners counterclockwise from bottom left
            let v = [at(ix, iy), at(ix + 1, iy), at(ix + 1, iy + 1), at(ix, iy + 1)];
            if v.iter().any(|z| !z.is_finite()) {
                continue;
            }
            let p: [(f64, f64); 4] =
                [(ix as f64, iy as f64), (ix as f64 + 1.0, iy as f64), (ix as f64 + 1.0, iy as f64 + 1.0), (ix as f64, iy as f64 + 1.0)];
            let edge = |e: usize| {
                let (i, j) = (e, (e + 1) % 4);
                let t = v[i] / (v[i] - v[j]);
                (p[i].0 + t * (p[j].0 - p[i].0), p[i].1 + t * (p[j].1 - p[i].1))
            };
            let crosses: Vec<usize> = (0..4).filter(|&e| (v[e] < 0.0) != (v[(e + 1) % 4] < 0.0)).collect();
            match crosses.len() {
                2 => segs.push([edge(crosses[0]), edge(crosses[1])]),
                4 => {
                    let centre_neg = v.iter().sum::<f64>() < 0.0;
                    // pair edges around the corners that differ from the centre
                    if (v[0] < 0.0) == centre_neg {
                        segs.push([edge(0), edge(1)]);
                        segs.push([edge(2), edge(3)]);
                    } else {
                        segs.push([edge(3), edge(0)]);
                        segs.push([edge(1), edge(2)]);
                    }
                }
                _ => {}
            }
        }
    }
    segs
}

fn rasterize(h: &Heatmap, scale: usize, contour: &[Segment]) -> (usize, usize, Vec<Rgb>) {
    let (nx, ny) = (h.x.len(), h.y.len());
    let (w, ht) = (nx * scale, ny * scale);
    let colors = cell_colors(h);
    let mut px = vec![MISSING; w * ht];
    for iy in 0..ny {
        for ix in 0..nx {
            let c = colors[iy * nx + ix];
            for dy in 0..scale {
                let row = ht - 1 - (iy * scale + dy);
                px[row * w + ix * scale..row * w + (ix + 1) * scale].fill(c);
            }
        }
    }
    // grid coordinate g maps to pixel centre of cell g
    let to_px = |(gx, gy): (f64, f64)| ((gx + 0.5) * scale as f64, ht as f64 - (gy + 0.5) * scale as f64);
    for s in contour {
        let (a, b) = (to_px(s[0]), to_px(s[1]));
        let n = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let (x, y) = (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
            let (xi, yi) = (x.floor() as isize, y.floor() as isize);
            if xi >= 0 && yi >= 0 && (xi as usize) < w && (yi as usize) < ht {
                px[yi as usize * w + xi as usize] = CONTOUR;
            }
        }
    }
    (w, ht, px)
}

/// Binary PPM with `scale` pixels per cell.
pub fn write_ppm(h: &Heatmap, contour: &[Segment], scale: usize, path: &Path) -> Result<()> {
    let (w, ht, px) = rasterize(h, scale.max(1), contour);
    let mut bytes = format!("P6\n{w} {ht}\n255\n").into_bytes();
    bytes.extend(px.iter().flatten());
    std::fs::write(path, bytes).map_err(|source| output::OutputError::Io { path: path.to_path_buf(), source })
}

pub fn svg_string(h: &Heatmap, contour: &[Segment], scale: usize) -> String {
    let (nx, ny) = (h.x.len(), h.y.len());
    let s = scale.max(1);
    let (w, ht) = (nx * s, ny * s);
    let colors = cell_colors(h);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{ht}" viewBox="0 0 {w} {ht}" shape-rendering="crispEdges">"#);
    let _ = writeln!(out, "<title>{} vs {}</title>", h.y_label, h.x_label);
    for iy in 0..ny {
        for ix in 0..nx {
            let [r, g, b] = colors[iy * nx + ix];
            let y = ht - (iy + 1) * s;
            let _ = writeln!(out, r##"<rect x="{}" y="{y}" width="{s}" height="{s}" fill="#{r:02x}{g:02x}{b:02x}"/>"##, ix * s);
        }
    }
    if !contour.is_empty() {
        let mut d = String::new();
        for seg in contour {
            let [(x0, y0), (x1, y1)] = seg.map(|(gx, gy)| ((gx + 0.5) * s as f64, ht as f64 - (gy + 0.5) * s as f64));
            let _ = write!(d, "M{x0:.3} {y0:.3}L{x1:.3} {y1:.3}");
        }
        let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="black" stroke-width="{}"/>"#, (s as f64 / 4.0).max(1.0));
    }
    out.push_str("</svg>\n");
    out
}

pub fn write_svg(h: &Heatmap, contour: &[Segment], scale: usize, path: &Path) -> Result<()> {
    output::write_text(path, &svg_string(h, contour, scale))
}
