//! Loss families, gradients and exact GD maps.
//!
//! Points are flat coordinate slices. Layouts per family:
//!
//! | family          | layout                          | length |
//! |-----------------|---------------------------------|--------|
//! | `Scalar`        | `(a, b)`                        | 2      |
//! | `ScalarVector`  | `(a[0..d], b[0..d])`            | 2d     |
//! | `Rank1`         | `(a, b, u, v)`                  | 4      |
//! | `Approx`        | `(a[0..n-1], b[0..n-1], u, v)`  | 2n     |
//! | `DiagOneSigma`  | `(a, b, u, v)`                  | 4      |
//! | `Quartic`       | `(a, b)`                        | 2      |
//!
//! `Rank1`, `Approx` and `DiagOneSigma` share one implementation: a signal
//! block of width `m` plus an off-signal pair `(u, v)` with target weight
//! `tau` on the off-signal entry (zero except for `DiagOneSigma`).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// `½(ab − σ)²`
    Scalar { sigma: f64 },
    /// `½(⟨a,b⟩ − 1)²` with `a, b ∈ R^d`
    ScalarVector { d: usize },
    /// `½‖BAᵀ − diag(1,0)‖²`
    Rank1,
    /// `½‖BAᵀ − diag(I_{n−1},0)‖²`
    Approx { n: usize },
    /// `½‖BAᵀ − diag(1,σ)‖²`
    DiagOneSigma { sigma: f64 },
    /// `½r² + μr⁴` with `r = ab − 1`
    Quartic { mu: f64 },
}

impl Family {
    pub fn dim(&self) -> usize {
        match *self {
            Family::Scalar { .. } | Family::Quartic { .. } => 2,
            Family::ScalarVector { d } => 2 * d,
            Family::Rank1 | Family::DiagOneSigma { .. } => 4,
            Family::Approx { n } => 2 * n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Family::Scalar { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                domain(format!("scalar sigma must be positive, got {sigma}"))
            }
            Family::ScalarVector { d } if d == 0 => domain("scalar-vector needs d >= 1"),
            Family::Approx { n } if n < 3 => domain(format!("approx needs n >= 3, got {n}")),
            Family::DiagOneSigma { sigma } if !(sigma > 0.0 && sigma < 1.0) => {
                domain(format!("diag sigma must lie in (0,1), got {sigma}"))
            }
            Family::Quartic { mu } if !mu.is_finite() => domain("quartic mu must be finite"),
            _ => Ok(()),
        }
    }

    pub fn layout(&self) -> String {
        match *self {
            Family::Scalar { .. } | Family::Quartic { .. } => "(a,b)".into(),
            Family::ScalarVector { d } => format!("(a[{d}],b[{d}])"),
            Family::Rank1 | Family::DiagOneSigma { .. } => "(a,b,u,v)".into(),
            Family::Approx { n } => format!("(a[{}],b[{}],u,v)", n - 1, n - 1),
        }
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Layout { expected: self.layout(), got: x.len() });
        }
        Ok(())
    }

    /// Signal width and off-signal target weight for the matrix families.
    fn matrix_shape(&self) -> Option<(usize, f64)> {
        match *self {
            Family::Rank1 => Some((1, 0.0)),
            Family::Approx { n } => Some((n - 1, 0.0)),
            Family::DiagOneSigma { sigma } => Some((1, sigma)),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Scalar { .. } => "scalar",
            Family::ScalarVector { .. } => "scalar_vector",
            Family::Rank1 => "rank1",
            Family::Approx { .. } => "approx",
            Family::DiagOneSigma { .. } => "diag",
            Family::Quartic { .. } => "quartic",
        }
    }
}

/// A loss family together with a step size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub family: Family,
    pub eta: f64,
}

/// Derived quantities of a point. `noise_defined` is false for the scalar
/// and scalar-vector families, whose `n` and `d_n` are then reported as 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub l: f64,
    pub g: f64,
    pub n: f64,
    pub d_s: f64,
    pub d_n: f64,
    pub d: f64,
    pub sqnorm: f64,
    pub noise_defined: bool,
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(p, q)| p * q).sum()
}

fn sq(x: &[f64]) -> f64 {
    dot(x, x)
}

struct Split<'a> {
    a: &'a [f64],
    b: &'a [f64],
    u: f64,
    v: f64,
}

fn split(x: &[f64], m: usize) -> Split<'_> {
    Split { a: &x[..m], b: &x[m..2 * m], u: x[2 * m], v: x[2 * m + 1] }
}

impl Problem {
    pub fn new(family: Family, eta: f64) -> Result<Self> {
        family.validate()?;
        if !(eta > 0.0 && eta.is_finite()) {
            return domain(format!("eta must be positive, got {eta}"));
        }
        Ok(Problem { family, eta })
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    /// Exact one-step GD image with simultaneous updates.
    pub fn step(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.family.check(x)?;
        let mut out = vec![0.0; x.len()];
        self.step_into(x, &mut out);
        Ok(out)
    }

    /// Allocation-free step. `x` and `out` must both have length `dim()`.
    pub fn step_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        let eta = self.eta;
        match self.family {
            Family::Scalar { sigma } => {
                let (a, b) = (x[0], x[1]);
                out[0] = (1.0 - eta * b * b) * a + eta * sigma * b;
                out[1] = (1.0 - eta * a * a) * b + eta * sigma * a;
            }
            Family::Quartic { mu } => {
                let (a, b) = (x[0], x[1]);
                let r = a * b - 1.0;
                let f = r + 4.0 * mu * r * r * r;
                out[0] = a - eta * f * b;
                out[1] = b - eta * f * a;
            }
            Family::ScalarVector { d } => {
                let (a, b) = x.split_at(d);
                let l = 1.0 - dot(a, b);
                for i in 0..d {
                    out[i] = a[i] + eta * l * b[i];
                    out[d + i] = b[i] + eta * l * a[i];
                }
            }
            _ => {
                let (m, tau) = self.family.matrix_shape().unwrap();
                let s = split(x, m);
                let na = sq(s.a) + s.u * s.u;
                let nb = sq(s.b) + s.v * s.v;
                let ca = 1.0 - eta * nb;
                let cb = 1.0 - eta * na;
                for i in 0..m {
                    out[i] = ca * s.a[i] + eta * s.b[i];
                    out[m + i] = cb * s.b[i] + eta * s.a[i];
                }
                out[2 * m] = ca * s.u + eta * tau * s.v;
                out[2 * m + 1] = cb * s.v + eta * tau * s.u;
            }
        }
    }

    pub fn loss(&self, x: &[f64]) -> Result<f64> {
        self.family.check(x)?;
        Ok(match self.family {
            Family::Scalar { sigma } => 0.5 * (x[0] * x[1] - sigma).powi(2),
            Family::Quartic { mu } => {
                let r = x[0] * x[1] - 1.0;
                0.5 * r * r + mu * r.powi(4)
            }
            Family::ScalarVector { d } => {
                let (a, b) = x.split_at(d);
                0.5 * (1.0 - dot(a, b)).powi(2)
            }
            _ => {
                let (m, tau) = self.family.matrix_shape().unwrap();
                let s = split(x, m);
                let (aa, bb, ab) = (sq(s.a), sq(s.b), dot(s.a, s.b));
                let d_s = (aa * bb - ab * ab).max(0.0);
                0.5 * (d_s
                    + (1.0 - ab).powi(2)
                    + (m as f64 - 1.0)
                    + s.u * s.u * bb
                    + s.v * s.v * aa
                    + (s.u * s.v - tau).powi(2))
            }
        })
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.family.check(x)?;
        let mut g = vec![0.0; x.len()];
        match self.family {
            Family::Scalar { sigma } => {
                let r = x[0] * x[1] - sigma;
                g[0] = r * x[1];
                g[1] = r * x[0];
            }
            Family::Quartic { mu } => {
                let r = x[0] * x[1] - 1.0;
                let f = r + 4.0 * mu * r * r * r;
                g[0] = f * x[1];
                g[1] = f * x[0];
            }
            Family::ScalarVector { d } => {
                let (a, b) = x.split_at(d);
                let l = 1.0 - dot(a, b);
                for i in 0..d {
                    g[i] = -l * b[i];
                    g[d + i] = -l * a[i];
                }
            }
            _ => {
                let (m, tau) = self.family.matrix_shape().unwrap();
                let s = split(x, m);
                let na = sq(s.a) + s.u * s.u;
                let nb = sq(s.b) + s.v * s.v;
                for i in 0..m {
                    g[i] = nb * s.a[i] - s.b[i];
                    g[m + i] = na * s.b[i] - s.a[i];
                }
                g[2 * m] = nb * s.u - tau * s.v;
                g[2 * m + 1] = na * s.v - tau * s.u;
            }
        }
        Ok(g)
    }

    /// Closed-form Hessian for the two- and four-coordinate families.
    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.family.check(x)?;
        match self.family {
            Family::Scalar { sigma } => {
                let (a, b) = (x[0], x[1]);
                let c = 2.0 * a * b - sigma;
                Ok(DMatrix::from_row_slice(2, 2, &[b * b, c, c, a * a]))
            }
            Family::Quartic { mu } => {
                let (a, b) = (x[0], x[1]);
                let r = a * b - 1.0;
                let f = r + 4.0 * mu * r.powi(3);
                let fp = 1.0 + 12.0 * mu * r * r;
                Ok(DMatrix::from_row_slice(
                    2,
                    2,
                    &[fp * b * b, fp * a * b + f, fp * a * b + f, fp * a * a],
                ))
            }
            Family::Rank1 | Family::DiagOneSigma { .. } => {
                let tau = self.family.matrix_shape().unwrap().1;
                let (a, b, u, v) = (x[0], x[1], x[2], x[3]);
                let nb = b * b + v * v;
                let na = a * a + u * u;
                #[rustfmt::skip]
                let h = [
                    nb,                2.0 * a * b - 1.0, 0.0,               2.0 * a * v,
                    2.0 * a * b - 1.0, na,                2.0 * b * u,       0.0,
                    0.0,               2.0 * b * u,       nb,                2.0 * u * v - tau,
                    2.0 * a * v,       0.0,               2.0 * u * v - tau, na,
                ];
                Ok(DMatrix::from_row_slice(4, 4, &h))
            }
            _ => Err(Error::Unsupported(format!(
                "closed-form Hessian not provided for {}",
                self.family.name()
            ))),
        }
    }

    pub fn observables(&self, x: &[f64]) -> Result<Observables> {
        self.family.check(x)?;
        let sqnorm = sq(x);
        Ok(match self.family {
            Family::Scalar { .. } | Family::Quartic { .. } => {
                let (a, b) = (x[0], x[1]);
                let target = match self.family {
                    Family::Scalar { sigma } => sigma,
                    _ => 1.0,
                };
                Observables {
                    l: target - a * b,
                    g: b * b - a * a,
                    n: 0.0,
                    d_s: 0.0,
                    d_n: 0.0,
                    d: 0.0,
                    sqnorm,
                    noise_defined: false,
                }
            }
            Family::ScalarVector { d } => {
                let (a, b) = x.split_at(d);
                let (aa, bb, ab) = (sq(a), sq(b), dot(a, b));
                let d_s = (aa * bb - ab * ab).max(0.0);
                Observables {
                    l: 1.0 - ab,
                    g: bb - aa,
                    n: 0.0,
                    d_s,
                    d_n: 0.0,
                    d: d_s,
                    sqnorm,
                    noise_defined: false,
                }
            }
            _ => {
                let (m, _) = self.family.matrix_shape().unwrap();
                let s = split(x, m);
                let (aa, bb, ab) = (sq(s.a), sq(s.b), dot(s.a, s.b));
                let big_a = aa + s.u * s.u;
                let big_b = bb + s.v * s.v;
                Observables {
                    l: 1.0 - ab,
                    g: bb - aa,
                    n: s.u * s.u + s.v * s.v,
                    d_s: (aa * bb - ab * ab).max(0.0),
                    d_n: s.u * s.u * s.v * s.v,
                    d: (big_a * big_b - ab * ab).max(0.0),
                    sqnorm,
                    noise_defined: true,
                }
            }
        })
    }

    pub fn is_stationary(&self, x: &[f64], tol: f64) -> Result<bool> {
        if !(tol > 0.0) {
            return domain("tol must be positive");
        }
        Ok(sq(&self.gradient(x)?).sqrt() <= tol)
    }

    /// Membership in the global minimizer set. For the matrix families this
    /// is `|⟨a,b⟩ − 1| ≤ tol`, `D_S ≤ tol` and `N ≤ tol`.
    pub fn is_global_minimizer(&self, x: &[f64], tol: f64) -> Result<bool> {
        if !(tol > 0.0) {
            return domain("tol must be positive");
        }
        let obs = self.observables(x)?;
        Ok(match self.family {
            Family::Scalar { .. } | Family::ScalarVector { .. } => obs.l.abs() <= tol,
            // ½r² + μr⁴ is unbounded below when μ < 0
            Family::Quartic { mu } => mu >= 0.0 && obs.l.abs() <= tol,
            _ => obs.l.abs() <= tol && obs.d_s <= tol && obs.n <= tol,
        })
    }
}

/// Rescales a scalar problem to unit target: `η ← ησ`, `x ← x/√σ`.
/// The other families are already in normalized coordinates.
pub fn normalize(problem: &Problem, x: &[f64]) -> Result<(Problem, Vec<f64>)> {
    problem.family.check(x)?;
    match problem.family {
        Family::Scalar { sigma } => {
            let s = sigma.sqrt();
            Ok((
                Problem { family: Family::Scalar { sigma: 1.0 }, eta: problem.eta * sigma },
                x.iter().map(|c| c / s).collect(),
            ))
        }
        _ => Ok((*problem, x.to_vec())),
    }
}

/// `Q(σ; a, b) = a² + b² + √((a² + b²)² − 16σ(ab − σ))`.
pub fn q_function(sigma: f64, a: f64, b: f64) -> f64 {
    let s = a * a + b * b;
    s + (s * s - 16.0 * sigma * (a * b - sigma)).sqrt()
}
