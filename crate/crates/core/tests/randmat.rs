use std::f64::consts::PI;

use critfield::quad::integrate_breaks;
use critfield::randmat::{
    eigenvalue_histogram, expect_absdet_s, expect_absdet_s_with, expect_functional_mc,
    expect_functionals_mc, fyodorov_absdet, fyodorov_absdet_with, homogeneous_rescale,
    rho_one_point, sample_matrix, semicircle_density, weyl_joint_density, wick_moments,
    wick_moments_printed, EnsembleParams, Functional, McOptions, OnePointDensity, RhoMethod,
};
use critfield::rng::rng;
use critfield::stats::mean_estimate;
use critfield::Error;
use proptest::prelude::*;
use proptest::test_runner::Config;

fn within(mean: f64, stderr: f64, target: f64, sigmas: f64) -> bool {
    (mean - target).abs() <= sigmas * stderr
}

#[test]
fn sampled_covariance_classes() {
    for (m, u, v, seed) in [(2usize, 0.0, 0.5, 1u64), (3, 1.0, 1.0, 2), (3, 0.3, 2.0, 3)] {
        let p = EnsembleParams::new(m, u, v).unwrap();
        let mut r = rng(seed);
        let n = 1_000_000;
        let mut cols: [Vec<f64>; 5] = Default::default();
        for _ in 0..n {
            let a = sample_matrix(&p, &mut r);
            cols[0].push(a[(0, 0)] * a[(0, 0)]);
            cols[1].push(a[(0, 0)] * a[(1, 1)]);
            cols[2].push(a[(0, 1)] * a[(0, 1)]);
            cols[3].push(a[(0, 1)] * a[(0, 0)]);
            cols[4].push(if m > 2 {
                a[(0, 1)] * a[(0, 2)]
            } else {
                a[(0, 1)] * a[(1, 1)]
            });
        }
        let targets = [u + 2.0 * v, u, v, 0.0, 0.0];
        for (c, t) in cols.iter().zip(targets) {
            let e = mean_estimate(c);
            assert!(
                within(e.mean, e.stderr, t, 3.0),
                "m={m} u={u} v={v}: {} +- {} vs {t}",
                e.mean,
                e.stderr
            );
        }
    }
}

#[test]
fn wick_moments_match_monte_carlo() {
    for (m, v, seed) in [(2usize, 1.0, 11u64), (3, 0.5, 12)] {
        let p = EnsembleParams::s(m, v).unwrap();
        let fs = [
            Functional::P,
            Functional::Q,
            Functional::P2,
            Functional::Pq,
            Functional::Q2,
        ];
        let est = expect_functionals_mc(&p, &fs, 1_000_000, seed, &McOptions::default()).unwrap();
        let w = wick_moments(m, v);
        for (e, t) in est.iter().zip([w.p, w.q, w.p2, w.pq, w.q2]) {
            assert!(e.within(t, 3.0), "m={m}: {} +- {} vs {t}", e.mean, e.stderr);
        }
        // the quoted E[pq] is far outside the sampling error
        let printed = wick_moments_printed(m, v);
        assert!((est[3].mean - printed.pq).abs() > 20.0 * est[3].stderr);
    }
}

#[test]
fn monte_carlo_is_deterministic_and_seed_sensitive() {
    let p = EnsembleParams::s(3, 1.0).unwrap();
    let a = expect_functional_mc(&p, Functional::AbsDet, 20_000, 5).unwrap();
    let b = expect_functional_mc(&p, Functional::AbsDet, 20_000, 5).unwrap();
    let c = expect_functional_mc(&p, Functional::AbsDet, 20_000, 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.mean, c.mean);
}

#[test]
fn stratified_sampling_agrees_and_helps() {
    let p = EnsembleParams::s(2, 1.0).unwrap();
    let plain = expect_functional_mc(&p, Functional::AbsDet, 400_000, 21).unwrap();
    let strat = expect_functionals_mc(
        &p,
        &[Functional::AbsDet],
        400_000,
        21,
        &McOptions {
            strata: 8,
            shift: 0.0,
        },
    )
    .unwrap()[0];
    let exact = expect_absdet_s(2, 1.0).unwrap();
    assert!(plain.within(exact, 3.0));
    assert!(strat.within(exact, 3.0));
    assert!(strat.stderr < plain.stderr);
}

#[test]
fn absdet_scales_homogeneously() {
    let small = expect_functional_mc(
        &EnsembleParams::s(2, 0.5).unwrap(),
        Functional::AbsDet,
        1_000_000,
        31,
    )
    .unwrap();
    let big = expect_functional_mc(
        &EnsembleParams::s(2, 2.0).unwrap(),
        Functional::AbsDet,
        1_000_000,
        32,
    )
    .unwrap();
    let predicted = homogeneous_rescale(small.mean, 2, 2.0);
    let se = (big.stderr.powi(2) + (4.0 * small.stderr).powi(2)).sqrt();
    assert!(within(big.mean, se, predicted, 3.0));
    // exact: degree-m homogeneity
    let r = expect_absdet_s(2, 2.0).unwrap() / expect_absdet_s(2, 1.0).unwrap();
    assert!((r - 2.0).abs() < 1e-8, "{r}");
}

#[test]
fn weyl_density_examples() {
    for l in [-1.3, 0.0, 0.4, 2.0] {
        let phi = (-l * l / 2.0f64).exp() / (2.0 * PI).sqrt();
        assert!((weyl_joint_density(0.5, &[l]).unwrap() - phi).abs() < 1e-15);
    }
    assert_eq!(weyl_joint_density(1.0, &[0.3, 0.3, -1.0]).unwrap(), 0.0);
    // 2-D adaptive quadrature
    let v = 0.5;
    let inner = |x: f64| {
        integrate_breaks(
            |y| weyl_joint_density(v, &[x, y]).unwrap(),
            -12.0,
            12.0,
            &[x],
            1e-15,
            1e-12,
            2000,
        )
        .unwrap()
        .value
    };
    let total = integrate_breaks(inner, -12.0, 12.0, &[0.0], 1e-14, 1e-11, 2000)
        .unwrap()
        .value;
    assert!((total - 1.0).abs() < 1e-6, "{total}");
}

#[test]
fn weyl_expectations_match_matrix_sampling() {
    // |det|, tr^2 and tr(A^2) over GOE_2^v by 2-D quadrature of the eigenvalue density
    let v = 0.7;
    let quad2 = |g: &dyn Fn(f64, f64) -> f64| {
        let inner = |x: f64| {
            integrate_breaks(
                |y| g(x, y) * weyl_joint_density(v, &[x, y]).unwrap(),
                -15.0,
                15.0,
                &[0.0, x],
                1e-15,
                1e-11,
                4000,
            )
            .unwrap()
            .value
        };
        integrate_breaks(inner, -15.0, 15.0, &[0.0], 1e-14, 1e-10, 4000)
            .unwrap()
            .value
    };
    let targets = [
        quad2(&|x, y| (x * y).abs()),
        quad2(&|x, y| (x + y).powi(2)),
        quad2(&|x, y| x * x + y * y),
    ];
    let p = EnsembleParams::goe(2, v).unwrap();
    let est = expect_functionals_mc(
        &p,
        &[Functional::AbsDet, Functional::P, Functional::Q],
        1_000_000,
        41,
        &McOptions::default(),
    )
    .unwrap();
    for (e, t) in est.iter().zip(targets) {
        assert!(e.within(t, 3.0), "{} +- {} vs {t}", e.mean, e.stderr);
    }
    // tr^2 and tr(A^2) of GOE_2^v in closed form
    assert!((targets[1] - 4.0 * v).abs() < 1e-8);
    assert!((targets[2] - 6.0 * v).abs() < 1e-8);
}

#[test]
fn one_point_density_examples() {
    assert!((rho_one_point(1, 0.5, 0.0).unwrap() - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
    let lhs = 2.0 * rho_one_point(3, 2.0, 1.4).unwrap();
    let rhs = rho_one_point(3, 0.5, 0.7).unwrap();
    assert!((lhs - rhs).abs() < 1e-9, "{lhs} {rhs}");
    assert!(matches!(rho_one_point(5, 1.0, 0.0), Err(Error::Budget(_))));
    for n in 1..=4 {
        let mass = integrate_breaks(
            |x| rho_one_point(n, 1.0, x).unwrap(),
            -13.0,
            13.0,
            &[0.0],
            1e-14,
            1e-10,
            2000,
        )
        .unwrap()
        .value;
        assert!((mass - 1.0).abs() < 1e-8, "n={n}: {mass}");
        // second moment: (1/n) E tr B^2 = (n+1) v
        let second = integrate_breaks(
            |x| x * x * rho_one_point(n, 1.0, x).unwrap(),
            -13.0,
            13.0,
            &[0.0],
            1e-14,
            1e-10,
            2000,
        )
        .unwrap()
        .value;
        assert!((second - (n as f64 + 1.0)).abs() < 1e-7, "n={n}: {second}");
    }
}

#[test]
fn kernel_estimate_matches_exact_rho_and_semicircle() {
    let exact = OnePointDensity::exact(3, 1.0).unwrap();
    let kde = OnePointDensity::histogram(3, 1.0, 200_000, 51).unwrap();
    assert_eq!(kde.method, RhoMethod::EigenvalueHistogram);
    for x in [-2.0, 0.0, 1.0, 3.0] {
        let (a, b) = (exact.eval(x).unwrap(), kde.eval(x).unwrap());
        assert!((a - b).abs() < 0.01, "x={x}: {a} vs {b}");
    }
    let n = 200;
    let big = OnePointDensity::auto(n, 1.0 / (2.0 * n as f64), 400, 52).unwrap();
    let at0 = big.eval(0.0).unwrap();
    assert!((at0 - semicircle_density(0.5, 0.0)).abs() < 0.05, "{at0}");
    assert!((semicircle_density(0.5, 0.0) - 2f64.sqrt() / PI).abs() < 1e-15);
}

#[test]
fn semicircle_is_normalised_and_matches_histograms() {
    let mass = integrate_breaks(
        |x| semicircle_density(1.0, x),
        -2.0,
        2.0,
        &[0.0],
        1e-15,
        1e-13,
        4000,
    )
    .unwrap()
    .value;
    assert!((mass - 1.0).abs() < 1e-10);
    for n in [50usize, 200] {
        let v = 1.0;
        let h = eigenvalue_histogram(n, v / n as f64, 200_000 / n, 36, -1.8, 1.8, 60 + n as u64)
            .unwrap();
        let worst = h
            .centers()
            .iter()
            .zip(&h.density)
            .map(|(c, d)| (d - semicircle_density(v, *c)).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.05, "n={n}: {worst}");
    }
}

#[test]
fn fyodorov_identity_against_monte_carlo() {
    for (m, v, l, seed) in [
        (2usize, 0.5, 0.0, 71u64),
        (2, 0.5, 1.0, 72),
        (3, 1.0, 0.5, 73),
        (1, 1.0, 2.0, 74),
    ] {
        let p = EnsembleParams::goe(m, v).unwrap();
        let mc = expect_functionals_mc(
            &p,
            &[Functional::AbsDet],
            1_000_000,
            seed,
            &McOptions {
                strata: 1,
                shift: l,
            },
        )
        .unwrap()[0];
        let exact = fyodorov_absdet(m, v, l).unwrap();
        assert!(
            mc.within(exact, 3.0),
            "m={m} v={v} l={l}: {} +- {} vs {exact}",
            mc.mean,
            mc.stderr
        );
    }
    assert!(matches!(
        fyodorov_absdet(4, 1.0, 0.0),
        Err(Error::Budget(_))
    ));
}

#[test]
fn fyodorov_is_even_in_the_shift() {
    for l in [0.3, 1.1, 2.5] {
        let a = fyodorov_absdet(3, 0.5, l).unwrap();
        let b = fyodorov_absdet(3, 0.5, -l).unwrap();
        assert!((a - b).abs() <= 1e-10 * a);
    }
}

#[test]
fn expected_absdet_over_s() {
    let exact = expect_absdet_s(2, 1.0).unwrap();
    let mc = expect_functional_mc(
        &EnsembleParams::s(2, 1.0).unwrap(),
        Functional::AbsDet,
        4_000_000,
        81,
    )
    .unwrap();
    assert!(
        mc.within(exact, 3.0),
        "{} +- {} vs {exact}",
        mc.mean,
        mc.stderr
    );
    // outside the theorem's range the identity still holds
    let exact1 = expect_absdet_s(1, 1.0).unwrap();
    // |N(0, 3)| has mean sqrt(6 / pi)
    assert!((exact1 - (6.0 / PI).sqrt()).abs() < 1e-9, "{exact1}");
    // kernel path for m = 4 against matrix sampling
    let rho = OnePointDensity::histogram(5, 1.0, 200_000, 82).unwrap();
    let via_kde = expect_absdet_s_with(4, &rho).unwrap();
    let mc4 = expect_functional_mc(
        &EnsembleParams::s(4, 1.0).unwrap(),
        Functional::AbsDet,
        1_000_000,
        83,
    )
    .unwrap();
    assert!(
        (via_kde / mc4.mean - 1.0).abs() < 0.02,
        "{via_kde} vs {}",
        mc4.mean
    );
    let via_fy = fyodorov_absdet_with(4, 0.0, &rho).unwrap();
    assert!(via_fy > 0.0);
}

proptest! {
    #![proptest_config(Config { cases: 24, failure_persistence: None, ..Config::default() })]

    #[test]
    fn rho_rescaling(n in 1usize..=3, v in 0.2f64..2.0, c in 0.5f64..3.0, y in -2.0f64..2.0) {
        let lhs = c * rho_one_point(n, c * c * v, c * y).unwrap();
        let rhs = rho_one_point(n, v, y).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1e-3));
    }

    #[test]
    fn weyl_density_is_symmetric(v in 0.2f64..2.0, a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0) {
        let x = weyl_joint_density(v, &[a, b, c]).unwrap();
        let y = weyl_joint_density(v, &[c, a, b]).unwrap();
        prop_assert!((x - y).abs() <= 1e-14 * x.max(1e-300));
        prop_assert!(x >= 0.0);
    }
}
