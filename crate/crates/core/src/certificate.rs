//! Certificate families, state parameter solver, affine recursions and
//! level-set geometry.
//!
//! The four polynomial certificates share one shape,
//!
//! ```text
//! I(δ; x) = δ·S(x) − δ²·P(x) + δ² − 4
//! ```
//!
//! where `S` is the squared norm of the coordinates the certificate sees and
//! `P` is the signal inner product. `TwoParam` is kept in the normalized
//! form with constant shift −1.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::zoo::{Family, Problem};

/// Gap below 2 at which a point is declared terminal.
pub const TERMINAL_GAP: f64 = 1e-9;
pub const BISECTION_MAX_ITER: usize = 200;
pub const BISECTION_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertKind {
    Sc,
    Fac,
    Apx,
    Sv,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    Isc { delta: f64 },
    Ifac { delta: f64 },
    Iapx { delta: f64 },
    Isv { delta: f64 },
    TwoParam { delta: f64, xi: f64, sigma: f64 },
}

impl CertKind {
    pub fn at(self, delta: f64) -> Certificate {
        match self {
            CertKind::Sc => Certificate::Isc { delta },
            CertKind::Fac => Certificate::Ifac { delta },
            CertKind::Apx => Certificate::Iapx { delta },
            CertKind::Sv => Certificate::Isv { delta },
        }
    }

    /// The certificate that tracks a family's trajectories, if any.
    pub fn for_family(family: &Family) -> Option<CertKind> {
        match family {
            Family::Scalar { .. } | Family::Quartic { .. } => Some(CertKind::Sc),
            Family::ScalarVector { .. } => Some(CertKind::Sv),
            Family::Rank1 => Some(CertKind::Fac),
            Family::Approx { .. } => Some(CertKind::Apx),
            Family::DiagOneSigma { .. } => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CertKind::Sc => "sc",
            CertKind::Fac => "fac",
            CertKind::Apx => "apx",
            CertKind::Sv => "sv",
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(p, q)| p * q).sum()
}

/// `(S, P)` for the polynomial kinds on a layout-checked point.
fn s_and_p(kind: CertKind, x: &[f64]) -> (f64, f64) {
    match kind {
        CertKind::Sc | CertKind::Fac => (dot(x, x), x[0] * x[1]),
        CertKind::Sv => {
            let d = x.len() / 2;
            (dot(x, x), dot(&x[..d], &x[d..]))
        }
        CertKind::Apx => {
            let m = (x.len() - 2) / 2;
            (dot(x, x), dot(&x[..m], &x[m..2 * m]))
        }
    }
}

impl Certificate {
    pub fn delta(&self) -> f64 {
        match *self {
            Certificate::Isc { delta }
            | Certificate::Ifac { delta }
            | Certificate::Iapx { delta }
            | Certificate::Isv { delta }
            | Certificate::TwoParam { delta, .. } => delta,
        }
    }

    pub fn kind(&self) -> Option<CertKind> {
        match self {
            Certificate::Isc { .. } => Some(CertKind::Sc),
            Certificate::Ifac { .. } => Some(CertKind::Fac),
            Certificate::Iapx { .. } => Some(CertKind::Apx),
            Certificate::Isv { .. } => Some(CertKind::Sv),
            Certificate::TwoParam { .. } => None,
        }
    }

    /// Parameter domain. Polynomial kinds also accept δ = 2, where the
    /// certificate degenerates to its limiting form (e.g. `2(a − b)²`).
    pub fn validate(&self) -> Result<()> {
        match *self {
            Certificate::TwoParam { delta, xi, sigma } => {
                if !(sigma > 0.0 && sigma < 1.0) {
                    return domain(format!("two-param sigma must lie in (0,1), got {sigma}"));
                }
                if !(delta > 0.0 && delta < 2.0) {
                    return domain(format!("delta must lie in (0,2), got {delta}"));
                }
                if !(xi > 0.0 && xi * sigma < 2.0) {
                    return domain(format!("xi must lie in (0, 2/sigma), got {xi}"));
                }
                Ok(())
            }
            _ => {
                let d = self.delta();
                if !(d > 0.0 && d <= 2.0) {
                    return domain(format!("delta must lie in (0,2], got {d}"));
                }
                Ok(())
            }
        }
    }

    pub fn check_layout(&self, len: usize) -> Result<()> {
        let ok = match self {
            Certificate::Isc { .. } => len == 2,
            Certificate::Ifac { .. } | Certificate::TwoParam { .. } => len == 4,
            Certificate::Iapx { .. } => len >= 4 && len % 2 == 0,
            Certificate::Isv { .. } => len >= 2 && len % 2 == 0,
        };
        if ok {
            Ok(())
        } else {
            let expected = match self {
                Certificate::Isc { .. } => "(a,b)",
                Certificate::Ifac { .. } | Certificate::TwoParam { .. } => "(a,b,u,v)",
                Certificate::Iapx { .. } => "(a[m],b[m],u,v)",
                Certificate::Isv { .. } => "(a[d],b[d])",
            };
            Err(Error::Layout { expected: expected.into(), got: len })
        }
    }

    /// Constant term: `δ² − 4` for the polynomial kinds, −1 for `TwoParam`.
    pub fn shift(&self) -> f64 {
        match self {
            Certificate::TwoParam { .. } => -1.0,
            _ => {
                let d = self.delta();
                d * d - 4.0
            }
        }
    }

    /// Homogeneous quadratic part, without checks.
    pub fn quadratic_unchecked(&self, x: &[f64]) -> f64 {
        match *self {
            Certificate::TwoParam { delta, xi, sigma } => {
                let (a, b, u, v) = (x[0], x[1], x[2], x[3]);
                let sig = (delta * (a * a + b * b) - delta * delta * a * b) / (4.0 - delta * delta);
                let noise = (xi * (u * u + v * v) - xi * xi * sigma * u * v)
                    / (4.0 - xi * xi * sigma * sigma);
                sig + noise
            }
            _ => {
                let (s, p) = s_and_p(self.kind().unwrap(), x);
                let d = self.delta();
                d * s - d * d * p
            }
        }
    }

    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.quadratic_unchecked(x) + self.shift()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.validate()?;
        self.check_layout(x.len())?;
        Ok(self.eval_unchecked(x))
    }

    pub fn quadratic_part(&self, x: &[f64]) -> Result<f64> {
        self.validate()?;
        self.check_layout(x.len())?;
        Ok(self.quadratic_unchecked(x))
    }

    /// `∂I/∂δ = S − 2δP + 2δ` for the polynomial kinds.
    pub fn delta_derivative(&self, x: &[f64]) -> Result<f64> {
        self.check_layout(x.len())?;
        let kind = self
            .kind()
            .ok_or_else(|| Error::Unsupported("two-param has no single-parameter derivative".into()))?;
        let (s, p) = s_and_p(kind, x);
        let d = self.delta();
        Ok(s - 2.0 * d * p + 2.0 * d)
    }

    /// Matrix form `xᵀPx + shift` for the 2×2 and 4×4 certificates.
    pub fn quadratic_form(&self) -> Result<QuadraticForm> {
        self.validate()?;
        match *self {
            Certificate::Isc { delta } => Ok(QuadraticForm {
                p: DMatrix::from_row_slice(
                    2,
                    2,
                    &[delta, -delta * delta / 2.0, -delta * delta / 2.0, delta],
                ),
                shift: delta * delta - 4.0,
            }),
            Certificate::Ifac { delta } => {
                let mut p = DMatrix::identity(4, 4) * delta;
                p[(0, 1)] = -delta * delta / 2.0;
                p[(1, 0)] = -delta * delta / 2.0;
                Ok(QuadraticForm { p, shift: delta * delta - 4.0 })
            }
            Certificate::TwoParam { delta, xi, sigma } => two_param_blocks(delta, xi, sigma),
            _ => Err(Error::Unsupported("matrix form only for fixed-size certificates".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm {
    pub p: DMatrix<f64>,
    pub shift: f64,
}

impl QuadraticForm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(x);
        (v.transpose() * &self.p * &v)[(0, 0)] + self.shift
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (&self.p - self.p.transpose()).amax() <= tol
    }

    /// Positive definiteness via Cholesky, cross-checked by the signs of the
    /// leading principal minors.
    pub fn is_positive_definite(&self) -> bool {
        let n = self.p.nrows();
        let chol = self.p.clone().cholesky().is_some();
        let minors = (1..=n).all(|k| self.p.view((0, 0), (k, k)).determinant() > 0.0);
        chol && minors
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateParameter {
    pub delta: f64,
    pub bracket: (f64, f64),
    pub terminal: bool,
    /// Result of the closed-form K₂ membership test when `terminal` is set.
    pub k2_confirmed: bool,
    pub residual: f64,
}

/// Solves `I(δ; x) = 0` for δ by bisection on `(lo, 2)`.
pub fn state_parameter(kind: CertKind, x: &[f64], lo: f64) -> Result<StateParameter> {
    if !(lo > 0.0 && lo < 2.0) {
        return domain(format!("lo must lie in (0,2), got {lo}"));
    }
    let at = |d: f64| kind.at(d).eval_unchecked(x);
    kind.at(lo).check_layout(x.len())?;
    let f_lo = at(lo);
    if !(f_lo <= 0.0) {
        return Err(Error::NotCertified { lo, value: f_lo });
    }
    let hi0 = 2.0 - TERMINAL_GAP;
    if hi0 <= lo {
        return domain("lo leaves no room below the terminal gap");
    }
    let f_hi = at(hi0);
    if f_hi < 0.0 {
        return Ok(StateParameter {
            delta: 2.0,
            bracket: (lo, hi0),
            terminal: true,
            k2_confirmed: k2_contains(kind, x, 1e-6),
            residual: f_hi,
        });
    }
    if f_lo == 0.0 {
        return Ok(StateParameter {
            delta: lo,
            bracket: (lo, lo),
            terminal: false,
            k2_confirmed: false,
            residual: 0.0,
        });
    }
    let tol = BISECTION_TOL * (1.0 + (lo * lo - 4.0).abs());
    let (mut a, mut b) = (lo, hi0);
    let mut mid = 0.5 * (a + b);
    let mut fm = at(mid);
    for _ in 0..BISECTION_MAX_ITER {
        mid = 0.5 * (a + b);
        fm = at(mid);
        if fm.abs() <= tol || b - a <= f64::EPSILON * 2.0 {
            break;
        }
        if fm < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    if !fm.is_finite() {
        return Err(Error::Bracket(format!("non-finite certificate value at delta = {mid}")));
    }
    Ok(StateParameter { delta: mid, bracket: (a, b), terminal: false, k2_confirmed: false, residual: fm })
}

fn k2_contains(kind: CertKind, x: &[f64], tol: f64) -> bool {
    let family = match kind {
        CertKind::Sc => Family::Scalar { sigma: 1.0 },
        CertKind::Fac => Family::Rank1,
        CertKind::Apx => Family::Approx { n: x.len() / 2 },
        CertKind::Sv => Family::ScalarVector { d: x.len() / 2 },
    };
    // Iapx accepts the m = 1 layout, which is the rank-1 slice.
    let family = match family {
        Family::Approx { n } if n < 3 => Family::Rank1,
        f => f,
    };
    terminal_set_contains(&family, x, tol).unwrap_or(false)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursionCoeffs {
    pub m: f64,
    pub r: f64,
}

/// `(M, R)` with `I(δ; GD(x)) = M·I(δ; x) + R`.
///
/// Scalar problems must be normalized to σ = 1 first.
pub fn recursion_coeffs(kind: CertKind, delta: f64, problem: &Problem, x: &[f64]) -> Result<RecursionCoeffs> {
    if !(delta > 0.0 && delta < 2.0) {
        return domain(format!("delta must lie in (0,2), got {delta}"));
    }
    let obs = problem.observables(x)?;
    let eta = problem.eta;
    let l = obs.l;
    match (kind, problem.family) {
        (CertKind::Sc, Family::Scalar { sigma }) => {
            if sigma != 1.0 {
                return Err(Error::Unsupported("normalize the scalar problem to sigma = 1 first".into()));
            }
            Ok(scalar_coeffs(delta, eta, l))
        }
        // μ = 0 is the scalar problem
        (CertKind::Sc, Family::Quartic { mu }) if mu == 0.0 => Ok(scalar_coeffs(delta, eta, l)),
        (CertKind::Sv, Family::ScalarVector { .. }) => Ok(scalar_coeffs(delta, eta, l)),
        (CertKind::Fac, Family::Rank1) => {
            let m = 1.0 - eta * delta * l + eta * eta * (l * l + obs.d);
            let r = -(eta * delta).powi(2) * obs.d_n
                + eta * (delta - eta) * ((delta * delta - 4.0) * l * l - 4.0 * obs.d + delta * obs.n);
            Ok(RecursionCoeffs { m, r })
        }
        (CertKind::Apx, Family::Approx { .. }) | (CertKind::Apx, Family::Rank1) => {
            let m = 1.0 - eta * delta * l + eta * eta * (l * l + obs.d);
            let r = eta * (delta - eta) * ((delta * delta - 4.0) * l * l - 4.0 * obs.d)
                + (eta * delta).powi(2) * (obs.d_s - obs.d_n)
                + eta * delta * (delta - eta) * obs.n;
            Ok(RecursionCoeffs { m, r })
        }
        (k, f) => Err(Error::Unsupported(format!(
            "no closed-form recursion for certificate {} on family {}",
            k.name(),
            f.name()
        ))),
    }
}

fn scalar_coeffs(delta: f64, eta: f64, l: f64) -> RecursionCoeffs {
    RecursionCoeffs {
        m: 1.0 - eta * delta * l + eta * eta * l * l,
        r: eta * (delta - eta) * (delta * delta - 4.0) * l * l,
    }
}

/// Post-step certificate value for a point already on the level set.
pub fn boundary_inward_ok(cert: &Certificate, problem: &Problem, x_on_level: &[f64]) -> Result<f64> {
    let before = cert.eval(x_on_level)?;
    if before.abs() > 1e-10 {
        return domain(format!("point is not on the level set: certificate value {before}"));
    }
    let y = problem.step(x_on_level)?;
    cert.eval(&y)
}

/// `q_η(δ) = ηδ² − 4(δ − η)`.
pub fn q_eta(eta: f64, delta: f64) -> f64 {
    eta * delta * delta - 4.0 * (delta - eta)
}

/// Smaller root of `q_{ησ}`.
pub fn delta_threshold(eta: f64, sigma: f64) -> Result<f64> {
    let e = eta * sigma;
    if !(e > 0.0 && e < 1.0) {
        return domain(format!(
            "eta*sigma = {e} is outside (0,1): no admissible threshold, post-critical regime"
        ));
    }
    // conjugate form avoids cancellation for small ησ
    Ok(2.0 * e / (1.0 + (1.0 - e * e).sqrt()))
}

/// `E(δ; L, G) = L² + G²/(4 − δ²) − 4/δ²`.
pub fn ellipse_value(delta: f64, l: f64, g: f64) -> f64 {
    l * l + g * g / (4.0 - delta * delta) - 4.0 / (delta * delta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftedEllipse {
    pub center_l: f64,
    pub semi_l: f64,
    pub semi_g: f64,
    pub valid: bool,
}

/// Ellipse in the `(L, G)` plane for fixed noise `N`.
pub fn shifted_ellipse_params(delta: f64, n: f64) -> Result<ShiftedEllipse> {
    if !(delta > 0.0 && delta < 2.0) {
        return domain(format!("delta must lie in (0,2), got {delta}"));
    }
    if !(n >= 0.0) {
        return domain("noise must be nonnegative");
    }
    let big = 4.0 - delta * delta;
    let semi_l = 2.0 / delta - 2.0 * n / big;
    Ok(ShiftedEllipse {
        center_l: delta * n / big,
        semi_l,
        semi_g: big.sqrt() * semi_l,
        valid: semi_l > 0.0,
    })
}

/// Closed-form membership in the terminal set K₂. `tol` applies to the
/// equality constraints.
pub fn terminal_set_contains(family: &Family, x: &[f64], tol: f64) -> Result<bool> {
    family.check(x)?;
    let dist = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(match *family {
        Family::Scalar { sigma } => {
            let (a, b) = (x[0], x[1]);
            (a - b).abs() <= tol && (sigma - a * a).powi(2) <= sigma * sigma
        }
        Family::Quartic { .. } => {
            let (a, b) = (x[0], x[1]);
            (a - b).abs() <= tol && (1.0 - a * a).powi(2) <= 1.0
        }
        Family::ScalarVector { d } => {
            let (a, b) = x.split_at(d);
            let aa = dot(a, a);
            dist(a, b) <= tol && (1.0 - aa).powi(2) <= 1.0
        }
        Family::Rank1 | Family::Approx { .. } => {
            let m = x.len() / 2 - 1;
            let (a, b) = (&x[..m], &x[m..2 * m]);
            let (u, v) = (x[2 * m], x[2 * m + 1]);
            dist(a, b) <= tol && u.abs() <= tol && v.abs() <= tol && dot(a, a) <= 2.0
        }
        Family::DiagOneSigma { sigma } => {
            let (a, b, u, v) = (x[0], x[1], x[2], x[3]);
            (a - b).abs() <= tol && (u - v).abs() <= tol && a * a + u * u / sigma <= 2.0
        }
    })
}

/// `P(δ) = (1/(4 − δ²))·[[δ, −δ²/2], [−δ²/2, δ]]` with shift −1.
pub fn p_matrix(delta: f64) -> Result<QuadraticForm> {
    if !(delta > 0.0 && delta < 2.0) {
        return domain(format!("p_matrix needs delta in (0,2), got {delta}"));
    }
    let c = 1.0 / (4.0 - delta * delta);
    let off = -delta * delta / 2.0 * c;
    Ok(QuadraticForm { p: DMatrix::from_row_slice(2, 2, &[delta * c, off, off, delta * c]), shift: -1.0 })
}

/// Deviation of `P x*` from being an eigenvector of the Hessian at `x*`,
/// relative to `‖P x*‖`.
pub fn lagrange_alignment_residual(problem: &Problem, minimizer: &[f64], p: &QuadraticForm) -> Result<f64> {
    if !problem.is_global_minimizer(minimizer, 1e-9)? {
        return domain("point is not a global minimizer");
    }
    let h = problem.hessian(minimizer)?;
    if h.nrows() != p.p.nrows() {
        return Err(Error::Unsupported("Hessian and P have different sizes".into()));
    }
    let x = nalgebra::DVector::from_column_slice(minimizer);
    let px = &p.p * &x;
    let hpx = &h * &px;
    let nrm2 = px.norm_squared();
    let lambda = px.dot(&hpx) / nrm2;
    Ok((hpx - px * lambda).norm() / nrm2.sqrt())
}

/// Block form of the two-parameter certificate in `(a, b, u, v)` order.
pub fn two_param_blocks(delta: f64, xi: f64, sigma: f64) -> Result<QuadraticForm> {
    Certificate::TwoParam { delta, xi, sigma }.validate()?;
    let s = 4.0 - delta * delta;
    let n = 4.0 - xi * xi * sigma * sigma;
    let (c1, d) = (delta / s, -delta * delta / (2.0 * s));
    let (c2, f) = (xi / n, -xi * xi * sigma / (2.0 * n));
    #[rustfmt::skip]
    let p = DMatrix::from_row_slice(4, 4, &[
        c1,  d,   0.0, 0.0,
        d,   c1,  0.0, 0.0,
        0.0, 0.0, c2,  f,
        0.0, 0.0, f,   c2,
    ]);
    Ok(QuadraticForm { p, shift: -1.0 })
}

/// Converts a polynomial certificate value to the normalized scale
/// `I/(4 − δ²)`, which has the same sign.
pub fn normalized_value(cert: &Certificate, value: f64) -> f64 {
    match cert {
        Certificate::TwoParam { .. } => value,
        _ => value / (4.0 - cert.delta().powi(2)),
    }
}
