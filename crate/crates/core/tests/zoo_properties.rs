use certlab_core::zoo::{Family, Problem};
use proptest::prelude::*;

fn families() -> Vec<Family> {
    vec![
        Family::Scalar { sigma: 1.0 },
        Family::Scalar { sigma: 2.5 },
        Family::ScalarVector { d: 1 },
        Family::ScalarVector { d: 4 },
        Family::Rank1,
        Family::Approx { n: 3 },
        Family::Approx { n: 6 },
        Family::DiagOneSigma { sigma: 0.3 },
        Family::Quartic { mu: 0.25 },
        Family::Quartic { mu: -0.25 },
    ]
}

fn family_and_point() -> impl Strategy<Value = (Family, Vec<f64>)> {
    (0..families().len()).prop_flat_map(|i| {
        let f = families()[i];
        (Just(f), prop::collection::vec(-2.0f64..2.0, f.dim()))
    })
}

fn swap(family: &Family, x: &[f64]) -> Vec<f64> {
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

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn gradient_matches_central_differences((f, x) in family_and_point()) {
        let p = Problem::new(f, 0.1).unwrap();
        let g = p.gradient(&x).unwrap();
        let h = 1e-5;
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (p.loss(&xp).unwrap() - p.loss(&xm).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()), "coord {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn step_is_x_minus_eta_gradient((f, x) in family_and_point(), eta in 0.01f64..1.9) {
        let p = Problem::new(f, eta).unwrap();
        let y = p.step(&x).unwrap();
        let g = p.gradient(&x).unwrap();
        for i in 0..x.len() {
            prop_assert!((y[i] - (x[i] - eta * g[i])).abs() <= 1e-12 * (1.0 + x[i].abs()));
        }
    }

    #[test]
    fn gd_map_is_odd((f, x) in family_and_point(), eta in 0.01f64..1.9) {
        let p = Problem::new(f, eta).unwrap();
        let y = p.step(&x).unwrap();
        let neg: Vec<f64> = x.iter().map(|c| -c).collect();
        let yn = p.step(&neg).unwrap();
        for (a, b) in y.iter().zip(&yn) {
            prop_assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn exchange_commutes_with_step((f, x) in family_and_point(), eta in 0.01f64..1.9) {
        let p = Problem::new(f, eta).unwrap();
        let lhs = p.step(&swap(&f, &x)).unwrap();
        let rhs = swap(&f, &p.step(&x).unwrap());
        for (a, b) in lhs.iter().zip(&rhs) {
            prop_assert!((a - b).abs() <= 1e-13 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn quartic_with_zero_mu_is_scalar(a in -3.0f64..3.0, b in -3.0f64..3.0, eta in 0.01f64..1.9) {
        let q = Problem::new(Family::Quartic { mu: 0.0 }, eta).unwrap();
        let s = Problem::new(Family::Scalar { sigma: 1.0 }, eta).unwrap();
        let x = q.step(&[a, b]).unwrap();
        let y = s.step(&[a, b]).unwrap();
        prop_assert!((x[0] - y[0]).abs() <= 1e-12 * (1.0 + y[0].abs()));
        prop_assert!((x[1] - y[1]).abs() <= 1e-12 * (1.0 + y[1].abs()));
    }

    #[test]
    fn unbalanced_minimizers_are_fixed(a in 0.2f64..4.0, eta in 0.01f64..1.9) {
        for (f, x) in [
            (Family::Scalar { sigma: 1.0 }, vec![a, 1.0 / a]),
            (Family::Rank1, vec![a, 1.0 / a, 0.0, 0.0]),
            (Family::Approx { n: 3 }, vec![a, 0.0, 1.0 / a, 0.0, 0.0, 0.0]),
            (Family::Quartic { mu: 0.25 }, vec![a, 1.0 / a]),
        ] {
            let p = Problem::new(f, eta).unwrap();
            if p.is_stationary(&x, 1e-12).unwrap() {
                let y = p.step(&x).unwrap();
                let nrm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                for (u, v) in x.iter().zip(&y) {
                    prop_assert!((u - v).abs() <= 1e-14 * nrm);
                }
            }
        }
    }

    #[test]
    fn observables_nonnegative((f, x) in family_and_point()) {
        let p = Problem::new(f, 0.1).unwrap();
        let o = p.observables(&x).unwrap();
        prop_assert!(o.n >= 0.0 && o.d_s >= 0.0 && o.d_n >= 0.0 && o.d >= 0.0);
        if matches!(f, Family::Scalar { .. } | Family::Quartic { .. }) {
            prop_assert_eq!(o.d_s, 0.0);
        }
    }

    #[test]
    fn loss_nonnegative_for_nonnegative_mu((f, x) in family_and_point()) {
        let p = Problem::new(f, 0.1).unwrap();
        if !matches!(f, Family::Quartic { mu } if mu < 0.0) {
            prop_assert!(p.loss(&x).unwrap() >= 0.0);
        }
    }
}

#[test]
fn stationary_points_do_not_move() {
    let cases: Vec<(Family, Vec<f64>)> = vec![
        (Family::Rank1, vec![2.0, 0.5, 0.0, 0.0]),
        (Family::Rank1, vec![0.0, 0.0, 3.0, 0.0]),
        (Family::Rank1, vec![0.0, 0.0, 0.0, -1.5]),
        (Family::Scalar { sigma: 2.0 }, vec![4.0, 0.5]),
        (Family::DiagOneSigma { sigma: 0.5 }, vec![1.0, 1.0, 0.0, 0.0]),
    ];
    for (f, x) in cases {
        let p = Problem::new(f, 0.9).unwrap();
        assert!(p.is_stationary(&x, 1e-12).unwrap(), "{f:?} {x:?}");
        assert_eq!(p.step(&x).unwrap(), x);
    }
}

/// Direct simulation of `½‖BAᵀ − diag(I_k, 0_m)‖²` with `A = (a, u)`,
/// `B = (b, v)`, `u, v ∈ R^m`.
fn full_step(eta: f64, k: usize, x: &[f64]) -> Vec<f64> {
    let m = x.len() / 2 - k;
    let (a, u) = (&x[..k], &x[k..k + m]);
    let (b, v) = (&x[k + m..2 * k + m], &x[2 * k + m..]);
    let na: f64 = a.iter().chain(u).map(|c| c * c).sum();
    let nb: f64 = b.iter().chain(v).map(|c| c * c).sum();
    let mut out = Vec::with_capacity(x.len());
    out.extend((0..k).map(|i| (1.0 - eta * nb) * a[i] + eta * b[i]));
    out.extend(u.iter().map(|c| (1.0 - eta * nb) * c));
    out.extend((0..k).map(|i| (1.0 - eta * na) * b[i] + eta * a[i]));
    out.extend(v.iter().map(|c| (1.0 - eta * na) * c));
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn null_space_reduction_tracks_offsignal_norm(
        k in 1usize..4,
        m in 1usize..5,
        seed in prop::collection::vec(-0.5f64..0.5, 2 * (3 + 4)),
        eta in 0.05f64..0.3,
    ) {
        let a = &seed[..k];
        let u = &seed[3..3 + m];
        let b = &seed[7..7 + k];
        let v = &seed[10..10 + m];
        let mut full: Vec<f64> = [a, u, b, v].concat();
        let nu = u.iter().map(|c| c * c).sum::<f64>().sqrt();
        let nv = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        let family = if k == 1 { Family::Rank1 } else { Family::Approx { n: k + 1 } };
        let p = Problem::new(family, eta).unwrap();
        let mut red: Vec<f64> = [a, b, &[nu, nv][..]].concat();
        for _ in 0..100 {
            full = full_step(eta, k, &full);
            red = p.step(&red).unwrap();
            let fu = full[k..k + m].iter().map(|c| c * c).sum::<f64>().sqrt();
            let fv = full[2 * k + m..].iter().map(|c| c * c).sum::<f64>().sqrt();
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-10 * (1.0 + y.abs());
            prop_assert!(close(red[2 * k].abs(), fu));
            prop_assert!(close(red[2 * k + 1].abs(), fv));
            for i in 0..k {
                prop_assert!(close(red[i], full[i]));
                prop_assert!(close(red[k + i], full[k + m + i]));
            }
        }
    }
}

#[test]
fn zero_offsignal_stays_zero() {
    let p = Problem::new(Family::Rank1, 0.4).unwrap();
    let mut x = vec![0.3, -1.2, 0.0, 0.7];
    for _ in 0..100 {
        x = p.step(&x).unwrap();
        assert_eq!(x[2], 0.0);
    }
}
