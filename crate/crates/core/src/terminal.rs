//! Reduced dynamics on the balanced manifold.
//!
//! On `a = b, u = v = 0` the rank-1 map collapses to the cubic
//! `g_η(L) = (1 − 2η)L + (2η − η²)L² + η²L³` for the residual `L = 1 − a²`.
//! For η > 1 it has a period-2 orbit `{L₋, L₊}`, attracting while
//! `η < √5 − 1`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// The cubic, evaluated in expanded monomial form.
pub fn g(eta: f64, l: f64) -> f64 {
    (1.0 - 2.0 * eta) * l + (2.0 * eta - eta * eta) * l * l + eta * eta * l * l * l
}

pub fn g_prime(eta: f64, l: f64) -> f64 {
    (1.0 - 2.0 * eta) + 2.0 * (2.0 * eta - eta * eta) * l + 3.0 * eta * eta * l * l
}

/// Quadratic factor whose roots are the 2-cycle.
pub fn period2_p(eta: f64, l: f64) -> f64 {
    eta * eta * l * l + eta * (1.0 - eta) * l + (1.0 - eta)
}

/// Quartic cofactor in the factorization of `g(g(L)) − L`.
pub fn period2_q(eta: f64, l: f64) -> f64 {
    let e2 = eta * eta;
    2.0 + 2.0 * eta * (1.0 - eta) * l
        + 3.0 * e2 * (1.0 - eta) * l * l
        + e2 * eta * (3.0 - eta) * l.powi(3)
        + e2 * e2 * l.powi(4)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoCycle {
    pub eta: f64,
    pub l_minus: f64,
    pub l_plus: f64,
    /// `g′(L₋)·g′(L₊)`
    pub multiplier: f64,
    pub sharp_minus: f64,
    pub sharp_plus: f64,
}

impl TwoCycle {
    pub fn mean_sharpness(&self) -> f64 {
        0.5 * (self.sharp_minus + self.sharp_plus)
    }

    /// Distance of the pair `(l_t, l_{t+1})` from the cycle in either phase.
    pub fn phase_error(&self, l_t: f64, l_next: f64) -> f64 {
        let e1 = (l_t - self.l_minus).abs().max((l_next - self.l_plus).abs());
        let e2 = (l_t - self.l_plus).abs().max((l_next - self.l_minus).abs());
        e1.min(e2)
    }
}

pub fn two_cycle(eta: f64) -> Result<TwoCycle> {
    if !(eta > 1.0) {
        return domain(format!(
            "eta = {eta} <= 1: the quadratic factor has no real roots, no nontrivial 2-cycle"
        ));
    }
    let root = ((eta - 1.0) * (eta + 3.0)).sqrt();
    let l_plus = (eta - 1.0 + root) / (2.0 * eta);
    let l_minus = (eta - 1.0 - root) / (2.0 * eta);
    Ok(TwoCycle {
        eta,
        l_minus,
        l_plus,
        multiplier: g_prime(eta, l_minus) * g_prime(eta, l_plus),
        sharp_minus: 2.0 - 3.0 * l_minus,
        sharp_plus: 2.0 - 3.0 * l_plus,
    })
}

/// Closed form of the 2-cycle multiplier.
pub fn cycle_multiplier(eta: f64) -> f64 {
    7.0 - 4.0 * eta - 2.0 * eta * eta
}

/// Affine change of variables `x = η/(1+η)·(1 − L)` conjugating `g_η` to
/// `h(x) = m·x(1 − x)²` with `m = (1 + η)²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugateMap {
    pub eta: f64,
    pub m: f64,
}

pub fn conjugate_map(eta: f64) -> ConjugateMap {
    ConjugateMap { eta, m: (1.0 + eta).powi(2) }
}

impl ConjugateMap {
    pub fn to_x(&self, l: f64) -> f64 {
        self.eta / (1.0 + self.eta) * (1.0 - l)
    }

    pub fn to_l(&self, x: f64) -> f64 {
        1.0 - x * (1.0 + self.eta) / self.eta
    }

    pub fn h(&self, x: f64) -> f64 {
        self.m * x * (1.0 - x) * (1.0 - x)
    }
}

/// Schwarzian derivative of `h`; independent of `m`.
pub fn schwarzian(x: f64) -> f64 {
    let den = 1.0 - 4.0 * x + 3.0 * x * x;
    -6.0 * (6.0 * x * x - 8.0 * x + 3.0) / (den * den)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoCycleWitness {
    pub eta: f64,
    pub max_factor_residual: f64,
    pub min_p: f64,
    pub min_q: f64,
    pub p_discriminant: f64,
    pub holds: bool,
}

/// Grid evidence that `g_η` has no 2-cycle in `[−1, 1]` for η < 1.
pub fn no_two_cycle_witness(eta: f64, grid: usize) -> Result<NoCycleWitness> {
    if !(eta > 0.0 && eta < 1.0) {
        return domain(format!("witness needs eta in (0,1), got {eta}"));
    }
    if grid < 2 {
        return domain("grid needs at least two points");
    }
    let mut max_res: f64 = 0.0;
    let mut min_p = f64::INFINITY;
    let mut min_q = f64::INFINITY;
    for i in 0..grid {
        let l = -1.0 + 2.0 * i as f64 / (grid - 1) as f64;
        let lhs = g(eta, g(eta, l)) - l;
        let (p, q) = (period2_p(eta, l), period2_q(eta, l));
        let rhs = eta * l * (l - 1.0) * (eta * l + 2.0) * p * q;
        max_res = max_res.max((lhs - rhs).abs());
        min_p = min_p.min(p);
        min_q = min_q.min(q);
    }
    let p_discriminant = eta * eta * (1.0 - eta) * (-3.0 - eta);
    Ok(NoCycleWitness {
        eta,
        max_factor_residual: max_res,
        min_p,
        min_q,
        p_discriminant,
        holds: max_res <= 1e-10 && min_p > 0.0 && min_q > 0.0 && p_discriminant < 0.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagStep {
    pub a: f64,
    pub u: f64,
    /// `β/α`
    pub ratio: f64,
}

/// One GD step of the diag(1,σ) problem restricted to `(a, a, u, u)`.
pub fn reduced_diag_sigma_step(eta: f64, sigma: f64, a: f64, u: f64) -> Result<DiagStep> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return domain(format!("sigma must lie in (0,1], got {sigma}"));
    }
    if a * a + u * u / sigma > 2.0 {
        return domain("point lies outside the balanced terminal set");
    }
    let s = a * a + u * u;
    let alpha = 1.0 - eta * s + eta;
    let beta = 1.0 - eta * s + eta * sigma;
    Ok(DiagStep { a: alpha * a, u: beta * u, ratio: beta / alpha })
}

/// Iterates `g_η` and returns the whole orbit including `l0`.
pub fn orbit(eta: f64, l0: f64, steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut l = l0;
    out.push(l);
    for _ in 0..steps {
        l = g(eta, l);
        out.push(l);
    }
    out
}
