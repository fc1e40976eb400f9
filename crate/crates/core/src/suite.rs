//! Randomized identity and property checks run by `certlab verify`.

use serde::Serialize;

use crate::certificate::{
    ellipse_value, p_matrix, recursion_coeffs, state_parameter, two_param_blocks, CertKind,
    Certificate,
};
use crate::rng::Sampler;
use crate::terminal::{self, conjugate_map, two_cycle};
use crate::zoo::{q_function, Family, Problem};
use crate::{SCHEMA_VERSION, TOOL_VERSION};

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name: name.into(), passed, detail }
}

/// Random point for a family with coordinates uniform in `[−r, r]`.
pub fn random_point(s: &mut Sampler, family: &Family, r: f64) -> Vec<f64> {
    (0..family.dim()).map(|_| s.uniform_in(-r, r)).collect()
}

fn recursion_identity(kind: CertKind, family: Family, samples: usize, seed: u64) -> CheckResult {
    let mut s = Sampler::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let delta = s.uniform_in(0.05, 1.95);
        let eta = s.uniform_in(0.05, 1.95);
        let p = Problem::new(family, eta).unwrap();
        let x = random_point(&mut s, &family, 2.0);
        let cert = kind.at(delta);
        let before = cert.eval(&x).unwrap();
        let after = cert.eval(&p.step(&x).unwrap()).unwrap();
        let c = recursion_coeffs(kind, delta, &p, &x).unwrap();
        worst = worst.max((after - (c.m * before + c.r)).abs() / (1.0 + before.abs()));
    }
    check(
        &format!("recursion identity {} on {}", kind.name(), family.name()),
        worst <= 1e-9,
        format!("worst scaled error {worst:.3e}"),
    )
}

fn perfect_square(samples: usize, seed: u64) -> CheckResult {
    let mut s = Sampler::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let d = s.uniform_in(1e-3, 2.0);
        let g = s.uniform_in(-5.0, 5.0);
        let lhs = d * (1.0 + g * g - d * g) * (d * g * g + (d * d - 8.0) * g + 16.0 / d - 3.0 * d)
            - (4.0 - d * d) * (d * g - 2.0).powi(2);
        let rhs = (d * g * g - 4.0 * g + d).powi(2);
        worst = worst.max((lhs - rhs).abs() / (1.0 + rhs.abs()));
    }
    check("perfect-square identity", worst <= 1e-9, format!("worst relative error {worst:.3e}"))
}

fn q_duality(samples: usize, seed: u64) -> CheckResult {
    let mut s = Sampler::new(seed);
    let mut worst: f64 = 0.0;
    let mut used = 0;
    while used < samples {
        let (a, b) = (s.uniform_in(-3.0, 3.0), s.uniform_in(-3.0, 3.0));
        let Ok(sp) = state_parameter(CertKind::Sc, &[a, b], 0.01) else { continue };
        if sp.terminal {
            continue;
        }
        worst = worst.max((sp.delta - 8.0 / q_function(1.0, a, b)).abs());
        used += 1;
    }
    check("state parameter equals 8/Q", worst <= 1e-10, format!("worst abs error {worst:.3e}"))
}

fn m_nonnegative(samples: usize, seed: u64) -> CheckResult {
    let mut s = Sampler::new(seed);
    let mut min_m = f64::INFINITY;
    for _ in 0..samples {
        let delta = s.uniform_in(0.01, 1.99);
        let eta = s.uniform_in(0.01, 1.99);
        let p = Problem::new(Family::Rank1, eta).unwrap();
        let x = random_point(&mut s, &Family::Rank1, 3.0);
        min_m = min_m.min(recursion_coeffs(CertKind::Fac, delta, &p, &x).unwrap().m);
    }
    check("recursion multiplier nonnegative", min_m >= 0.0, format!("min M {min_m:.3e}"))
}

fn ellipse_sign(samples: usize, seed: u64) -> CheckResult {
    let mut s = Sampler::new(seed);
    let mut mismatches = 0;
    for _ in 0..samples {
        let delta = s.uniform_in(0.01, 1.99);
        let (a, b) = (s.uniform_in(-3.0, 3.0), s.uniform_in(-3.0, 3.0));
        let i = Certificate::Isc { delta }.eval(&[a, b]).unwrap();
        let e = ellipse_value(delta, 1.0 - a * b, b * b - a * a);
        // both vanish together; skip razor-thin ties
        if i.abs() > 1e-9 && i.signum() != e.signum() {
            mismatches += 1;
        }
    }
    check("ellipse sign equivalence", mismatches == 0, format!("{mismatches} mismatches"))
}

fn nesting(samples: usize, seed: u64) -> CheckResult {
    let mut s = Sampler::new(seed);
    let mut bad = 0;
    for _ in 0..samples {
        let kind = [CertKind::Sc, CertKind::Fac][(s.uniform() * 2.0) as usize];
        let len = if kind == CertKind::Sc { 2 } else { 4 };
        let x: Vec<f64> = (0..len).map(|_| s.uniform_in(-2.0, 2.0)).collect();
        let d1 = s.uniform_in(0.01, 1.99);
        let d2 = s.uniform_in(0.01, 1.99);
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        if kind.at(hi).eval(&x).unwrap() <= 0.0 && kind.at(lo).eval(&x).unwrap() >= 0.0 {
            bad += 1;
        }
    }
    check("sublevel sets nest in delta", bad == 0, format!("{bad} violations"))
}

fn positive_definite(samples: usize, seed: u64) -> CheckResult {
    let mut s = Sampler::new(seed);
    let mut bad = 0;
    for _ in 0..samples {
        let delta = s.uniform_in(0.01, 1.99);
        let sigma = s.uniform_in(0.01, 0.99);
        let xi = s.uniform_in(0.01, 1.99 / sigma);
        if !p_matrix(delta).unwrap().is_positive_definite()
            || !two_param_blocks(delta, xi, sigma).unwrap().is_positive_definite()
        {
            bad += 1;
        }
    }
    check("certificate forms positive definite", bad == 0, format!("{bad} failures"))
}

fn all_families() -> Vec<Family> {
    vec![
        Family::Scalar { sigma: 1.7 },
        Family::ScalarVector { d: 3 },
        Family::Rank1,
        Family::Approx { n: 4 },
        Family::DiagOneSigma { sigma: 0.4 },
        Family::Quartic { mu: 0.25 },
        Family::Quartic { mu: -1.0 / 16.0 },
    ]
}

fn gradient_check(seed: u64) -> CheckResult {
    let mut s = Sampler::new(seed);
    let mut worst: f64 = 0.0;
    for family in all_families() {
        let p = Problem::new(family, 0.1).unwrap();
        for _ in 0..100 {
            let x = random_point(&mut s, &family, 1.5);
            let g = p.gradient(&x).unwrap();
            let h = 1e-5;
            for i in 0..x.len() {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i] += h;
                xm[i] -= h;
                let fd = (p.loss(&xp).unwrap() - p.loss(&xm).unwrap()) / (2.0 * h);
                worst = worst.max((fd - g[i]).abs() / (1.0 + g[i].abs()));
            }
        }
    }
    check("gradient matches central differences", worst < 1e-6, format!("worst {worst:.3e}"))
}

fn oddness_and_exchange(seed: u64) -> CheckResult {
    let mut s = Sampler::new(seed);
    let mut worst: f64 = 0.0;
    for family in all_families() {
        let p = Problem::new(family, 0.3).unwrap();
        for _ in 0..100 {
            let x = random_point(&mut s, &family, 1.5);
            let y = p.step(&x).unwrap();
            let neg: Vec<f64> = x.iter().map(|c| -c).collect();
            let yn = p.step(&neg).unwrap();
            for (a, b) in y.iter().zip(&yn) {
                worst = worst.max((a + b).abs());
            }
            let sw = swap(&family, &x);
            let ys = p.step(&sw).unwrap();
            for (a, b) in swap(&family, &y).iter().zip(&ys) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    check("GD map is odd and exchange symmetric", worst <= 1e-12, format!("worst {worst:.3e}"))
}

/// `(a, b, u, v) ↦ (b, a, v, u)` in the family's layout.
pub fn swap(family: &Family, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    let m = match family {
        Family::ScalarVector { d } => {
            y[..*d].copy_from_slice(&x[*d..]);
            y[*d..].copy_from_slice(&x[..*d]);
            return y;
        }
        Family::Scalar { .. } | Family::Quartic { .. } => return vec![x[1], x[0]],
        Family::Approx { n } => n - 1,
        _ => 1,
    };
    y[..m].copy_from_slice(&x[m..2 * m]);
    y[m..2 * m].copy_from_slice(&x[..m]);
    y[2 * m] = x[2 * m + 1];
    y[2 * m + 1] = x[2 * m];
    y
}

fn fixed_points() -> CheckResult {
    let cases: Vec<(Family, Vec<f64>)> = vec![
        (Family::Scalar { sigma: 1.0 }, vec![2.0, 0.5]),
        (Family::Rank1, vec![2.0, 0.5, 0.0, 0.0]),
        (Family::Rank1, vec![0.0, 0.0, 3.0, 0.0]),
        (Family::Approx { n: 3 }, vec![0.8, 0.6, 0.8, 0.6, 0.0, 0.0]),
        (Family::Quartic { mu: 0.25 }, vec![4.0, 0.25]),
        (Family::ScalarVector { d: 2 }, vec![1.0, 0.0, 1.0, 5.0]),
    ];
    let mut worst: f64 = 0.0;
    for (family, x) in cases {
        let p = Problem::new(family, 0.7).unwrap();
        assert!(p.is_stationary(&x, 1e-12).unwrap());
        let y = p.step(&x).unwrap();
        let nrm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        for (a, b) in x.iter().zip(&y) {
            worst = worst.max((a - b).abs() / nrm);
        }
    }
    check("stationary points are fixed", worst <= 1e-14, format!("worst relative move {worst:.3e}"))
}

fn reduced_map_checks() -> Vec<CheckResult> {
    let mut out = Vec::new();
    let c = two_cycle(1.2).unwrap();
    let closure = (terminal::g(1.2, c.l_minus) - c.l_plus)
        .abs()
        .max((terminal::g(1.2, c.l_plus) - c.l_minus).abs());
    let mult = (c.multiplier - terminal::cycle_multiplier(1.2)).abs();
    out.push(check(
        "2-cycle closes with closed-form multiplier",
        closure <= 1e-12 && mult <= 1e-12,
        format!("closure {closure:.3e}, multiplier error {mult:.3e}"),
    ));
    let h = conjugate_map(1.2);
    let mut worst: f64 = 0.0;
    for i in 0..=200 {
        let l = -1.0 + 2.0 * i as f64 / 200.0;
        worst = worst.max((h.to_x(terminal::g(1.2, l)) - h.h(h.to_x(l))).abs());
    }
    out.push(check("conjugacy commutes", worst <= 1e-12, format!("worst {worst:.3e}")));
    let w = terminal::no_two_cycle_witness(0.5, 2001).unwrap();
    out.push(check(
        "no 2-cycle below the critical step",
        w.holds,
        format!("factor residual {:.3e}, min P {:.3}, min Q {:.3}", w.max_factor_residual, w.min_p, w.min_q),
    ));
    out
}

/// Runs the whole suite. `schema_version`/`tool_version` are the versions
/// the caller writes into its outputs.
pub fn run_suite(schema_version: u32, tool_version: &str) -> Vec<CheckResult> {
    let mut out = vec![check(
        "schema and tool versions agree",
        schema_version == SCHEMA_VERSION && tool_version == TOOL_VERSION,
        format!("caller {schema_version}/{tool_version}, library {SCHEMA_VERSION}/{TOOL_VERSION}"),
    )];
    out.push(recursion_identity(CertKind::Sc, Family::Scalar { sigma: 1.0 }, 10_000, 11));
    out.push(recursion_identity(CertKind::Fac, Family::Rank1, 10_000, 12));
    out.push(recursion_identity(CertKind::Apx, Family::Approx { n: 4 }, 10_000, 13));
    out.push(recursion_identity(CertKind::Sv, Family::ScalarVector { d: 3 }, 10_000, 14));
    out.push(perfect_square(10_000, 15));
    out.push(q_duality(1000, 16));
    out.push(m_nonnegative(10_000, 17));
    out.push(ellipse_sign(10_000, 18));
    out.push(nesting(1000, 19));
    out.push(positive_definite(100, 20));
    out.push(gradient_check(21));
    out.push(oddness_and_exchange(22));
    out.push(fixed_points());
    out.extend(reduced_map_checks());
    out
}
