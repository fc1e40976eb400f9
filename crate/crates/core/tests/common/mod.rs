//! Test-local oracles. Everything here is written from the closed forms
//! directly and shares no code with the library.

#![allow(dead_code)]

use certlab_core::zoo::Family;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `δ(‖a‖² + ‖b‖² + noise) − δ²⟨a,b⟩ + δ² − 4` on the signal vectors `a, b`.
pub fn poly_cert(d: f64, a: &[f64], b: &[f64], noise: f64) -> f64 {
    d * (dot(a, a) + dot(b, b) + noise) - d * d * dot(a, b) + d * d - 4.0
}

pub fn isc(d: f64, a: f64, b: f64) -> f64 {
    poly_cert(d, &[a], &[b], 0.0)
}

pub fn ifac(d: f64, x: &[f64]) -> f64 {
    poly_cert(d, &x[..1], &x[1..2], x[2] * x[2] + x[3] * x[3])
}

/// Certificate value for a point laid out as the library does.
pub fn cert_value(family: &Family, d: f64, x: &[f64]) -> f64 {
    match *family {
        Family::Scalar { .. } | Family::Quartic { .. } => isc(d, x[0], x[1]),
        Family::ScalarVector { d: n } => poly_cert(d, &x[..n], &x[n..], 0.0),
        _ => {
            let m = x.len() / 2 - 1;
            poly_cert(d, &x[..m], &x[m..2 * m], x[2 * m] * x[2 * m] + x[2 * m + 1] * x[2 * m + 1])
        }
    }
}

/// Loss written as the squared Frobenius residual of the explicit matrices.
pub fn loss(family: &Family, x: &[f64]) -> f64 {
    match *family {
        Family::Scalar { sigma } => 0.5 * (x[0] * x[1] - sigma).powi(2),
        Family::Quartic { mu } => {
            let r = x[0] * x[1] - 1.0;
            0.5 * r * r + mu * r.powi(4)
        }
        Family::ScalarVector { d } => 0.5 * (dot(&x[..d], &x[d..]) - 1.0).powi(2),
        _ => {
            // full (m+1)×(m+1) residual of (b,v)(a,u)ᵀ against diag(1, …, 1, τ)
            let m = x.len() / 2 - 1;
            let tau = match *family {
                Family::DiagOneSigma { sigma } => sigma,
                _ => 0.0,
            };
            let av: Vec<f64> = x[..m].iter().copied().chain([x[2 * m]]).collect();
            let bv: Vec<f64> = x[m..2 * m].iter().copied().chain([x[2 * m + 1]]).collect();
            let mut s = 0.0;
            for i in 0..=m {
                for j in 0..=m {
                    let target = if i == j { if i < m { 1.0 } else { tau } } else { 0.0 };
                    let e = bv[i] * av[j] - target;
                    s += e * e;
                }
            }
            0.5 * s
        }
    }
}

pub fn fd_gradient(family: &Family, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            (loss(family, &p) - loss(family, &m)) / (2.0 * h)
        })
        .collect()
}

/// Explicit GD step for every family.
pub fn gd_step(family: &Family, eta: f64, x: &[f64]) -> Vec<f64> {
    match *family {
        Family::Scalar { sigma } => {
            let r = x[0] * x[1] - sigma;
            vec![x[0] - eta * r * x[1], x[1] - eta * r * x[0]]
        }
        Family::Quartic { mu } => {
            let r = x[0] * x[1] - 1.0;
            let f = r + 4.0 * mu * r.powi(3);
            vec![x[0] - eta * f * x[1], x[1] - eta * f * x[0]]
        }
        Family::ScalarVector { d } => {
            let r = dot(&x[..d], &x[d..]) - 1.0;
            let mut y: Vec<f64> = (0..d).map(|i| x[i] - eta * r * x[d + i]).collect();
            y.extend((0..d).map(|i| x[d + i] - eta * r * x[i]));
            y
        }
        _ => {
            let m = x.len() / 2 - 1;
            let tau = match *family {
                Family::DiagOneSigma { sigma } => sigma,
                _ => 0.0,
            };
            let (a, b, u, v) = (&x[..m], &x[m..2 * m], x[2 * m], x[2 * m + 1]);
            let na = dot(a, a) + u * u;
            let nb = dot(b, b) + v * v;
            let mut y: Vec<f64> = (0..m).map(|i| a[i] - eta * (a[i] * nb - b[i])).collect();
            y.extend((0..m).map(|i| b[i] - eta * (b[i] * na - a[i])));
            y.push(u - eta * (u * nb - tau * v));
            y.push(v - eta * (v * na - tau * u));
            y
        }
    }
}

/// The exchange `(a, b, u, v) ↦ (b, a, v, u)`.
pub fn swap(family: &Family, x: &[f64]) -> Vec<f64> {
    match *family {
        Family::Scalar { .. } | Family::Quartic { .. } => vec![x[1], x[0]],
        Family::ScalarVector { d } => [&x[d..], &x[..d]].concat(),
        _ => {
            let m = x.len() / 2 - 1;
            let mut y = [&x[m..2 * m], &x[..m]].concat();
            y.push(x[2 * m + 1]);
            y.push(x[2 * m]);
            y
        }
    }
}

/// `Q(1; a, b)` written out directly.
pub fn q_one(a: f64, b: f64) -> f64 {
    let s = a * a + b * b;
    s + (s * s - 16.0 * (a * b - 1.0)).sqrt()
}

pub fn all_families() -> Vec<Family> {
    vec![
        Family::Scalar { sigma: 1.0 },
        Family::Scalar { sigma: 0.4 },
        Family::ScalarVector { d: 1 },
        Family::ScalarVector { d: 3 },
        Family::Rank1,
        Family::Approx { n: 3 },
        Family::Approx { n: 5 },
        Family::DiagOneSigma { sigma: 0.6 },
        Family::Quartic { mu: 0.25 },
        Family::Quartic { mu: 1.0 / 16.0 },
        Family::Quartic { mu: -1.0 / 16.0 },
        Family::Quartic { mu: -0.25 },
    ]
}
