use critfield::critpoints::{count_newton, CubeBox, NewtonOptions};
use critfield::experiments::{
    crosscheck_field, estimator_crosscheck, normality_test, run_clt, variance_scaling,
    ExperimentConfig, ExperimentRecord, Sufficiency,
};
use critfield::field::{synthesize, FieldRealization, GridSpec, Jet};
use critfield::rng::rng;
use critfield::spectrum::{spectral_moments, DensitySpec, Family, SpectralDensity};
use critfield::Error;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn config(half_widths: Vec<f64>, realizations: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        density: DensitySpec {
            family: Family::Gaussian,
            params: vec![1.0],
        },
        m: 2,
        half_widths,
        realizations,
        points_per_unit: 8,
        padding: 2.0,
        master_seed: seed,
        epsilons: vec![0.2, 0.0125],
    }
}

#[test]
fn single_realization_is_flagged_insufficient() {
    let rec = run_clt(&config(vec![3.0], 1, 5)).unwrap();
    let s = &rec.series[0];
    assert_eq!(s.counts.len(), 1);
    assert_eq!(s.status, Sufficiency::Insufficient);
    assert!(s.v_n.is_none() && s.ks.is_none() && s.mean_density_stderr.is_none());
    let back = ExperimentRecord::from_json(&rec.to_json()).unwrap();
    assert_eq!(back, rec);
}

#[test]
fn records_are_reproducible() {
    let cfg = config(vec![3.0, 4.0], 12, 77);
    let a = run_clt(&cfg).unwrap();
    let b = run_clt(&cfg).unwrap();
    assert_eq!(a.content_hash(), b.content_hash());
    assert_eq!(a.config_hash, cfg.hash());
    let c = run_clt(&config(vec![3.0, 4.0], 12, 78)).unwrap();
    assert_ne!(a.content_hash(), c.content_hash());
    // the hash survives a JSON round trip
    let back = ExperimentRecord::from_json(&a.to_json()).unwrap();
    assert_eq!(back.content_hash(), a.content_hash());
}

#[test]
fn mean_count_matches_expected_density() {
    let rec = run_clt(&config(vec![4.0, 6.0], 120, 3)).unwrap();
    assert!((rec.e_absdet_s1 - 4.0 / 3f64.sqrt()).abs() < 1e-8);
    assert!((rec.expected_density - 2.0 / (std::f64::consts::PI * 3f64.sqrt())).abs() < 1e-8);
    for s in &rec.series {
        assert_eq!(s.status, Sufficiency::Sufficient);
        assert!(s.failures.is_empty());
        let se = s.mean_density_stderr.unwrap();
        assert!(
            (s.mean_density - rec.expected_density).abs() <= 3.0 * se,
            "N={}: {} +- {se} vs {}",
            s.half_width,
            s.mean_density,
            rec.expected_density
        );
        // zeta is recomputable from the stored counts and centering
        let m = rec.config.m;
        assert_eq!(s.zeta(m, s.expected), s.zeta_theoretical);
        assert_eq!(s.zeta(m, s.pooled_mean), s.zeta_pooled);
        // the two centerings differ by a constant that is small next to the spread
        let shift = s.zeta_theoretical[0] - s.zeta_pooled[0];
        let spread = (s.v_n.unwrap() / s.counts.len() as f64).sqrt();
        assert!(shift.abs() <= 3.0 * spread, "{shift} vs {spread}");
    }
}

#[test]
fn variance_table() {
    let rec = run_clt(&config(vec![3.0, 4.0, 5.0], 40, 9)).unwrap();
    let t = variance_scaling(&rec, 200, 1).unwrap();
    assert_eq!(t.rows.len(), 3);
    assert!(!t.sufficient);
    for r in &t.rows {
        assert!(r.v_n > 0.0 && r.stderr > 0.0);
        assert!(r.ci_low <= r.v_n && r.v_n <= r.ci_high);
    }
    let ratio = t.plateau_ratio.unwrap();
    assert!((ratio - t.rows[2].v_n / t.rows[1].v_n).abs() < 1e-15);
    assert_eq!(t, variance_scaling(&rec, 200, 1).unwrap());

    let mut flat = rec.clone();
    for s in &mut flat.series {
        s.counts.iter_mut().for_each(|z| *z = 11.0);
    }
    let t = variance_scaling(&flat, 50, 1).unwrap();
    assert!(t.rows.iter().all(|r| r.v_n == 0.0 && r.ci_high == 0.0));
}

#[test]
fn normality_test_calibration_and_power() {
    let mut r = rng(31);
    let mut draw = |shift: f64| -> Vec<f64> {
        (0..500)
            .map(|_| shift + r.sample::<f64, _>(StandardNormal))
            .collect()
    };
    assert!(normality_test(&draw(0.0), 1.0).unwrap().p_value > 0.01);
    assert!(normality_test(&draw(1.0), 1.0).unwrap().p_value < 0.001);
    // p-values under the null are close to uniform
    let ps: Vec<f64> = (0..200)
        .map(|_| normality_test(&draw(0.0), 1.0).unwrap().p_value)
        .collect();
    let below = ps.iter().filter(|&&p| p < 0.1).count();
    assert!((8..=35).contains(&below), "{below} of 200 below 0.1");
    let uniform = ps.iter().filter(|&&p| p < 0.5).count();
    assert!((78..=122).contains(&uniform), "{uniform} of 200 below 0.5");
    assert!(matches!(
        normality_test(&[0.0; 50], 1.0),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn crosscheck_on_small_boxes() {
    let mut cfg = config(vec![3.0], 8, 12);
    cfg.points_per_unit = 10;
    let t = estimator_crosscheck(&cfg).unwrap();
    assert_eq!(t.rows.len(), 8);
    assert_eq!(t.epsilons, vec![0.2, 0.0125]);
    assert!(t.median_relative_fine <= 0.02, "{t:?}");
    assert!(t.median_relative_fine <= t.median_relative_coarse);
    cfg.half_widths = vec![6.0];
    assert!(matches!(estimator_crosscheck(&cfg), Err(Error::Budget(_))));
}

#[test]
fn degenerate_field_is_rejected_by_both_estimators() {
    let grid = GridSpec::new(2, 2.0, 8, 2.0).unwrap();
    let zero = FieldRealization::from_fn(grid, |_| Jet {
        value: 0.0,
        gradient: DVector::zeros(2),
        hessian: DMatrix::zeros(2, 2),
    })
    .unwrap();
    let mo = spectral_moments(&SpectralDensity::gaussian(1.0, 2).unwrap(), 2).unwrap();
    let bbox = CubeBox::cube(-1.0, 1.0, 2).unwrap();
    assert!(matches!(
        crosscheck_field(&zero, &bbox, &mo, &[0.1], 0),
        Err(Error::Degenerate(_))
    ));
}

#[test]
fn counts_add_over_half_open_sub_boxes() {
    let w = SpectralDensity::gaussian(1.0, 2).unwrap();
    let mo = spectral_moments(&w, 2).unwrap();
    let grid = GridSpec::new(2, 4.0, 8, 2.0).unwrap();
    for seed in 0..4 {
        let field = synthesize(&w, grid, seed).unwrap();
        let opts = NewtonOptions::for_field(&field, &mo);
        let whole = count_newton(&field, &CubeBox::cube(-4.0, 4.0, 2).unwrap(), &opts).unwrap();
        let mut parts = 0;
        for (a, b) in [(-4.0, 0.0), (0.0, 4.0)] {
            for (c, d) in [(-4.0, 1.5), (1.5, 4.0)] {
                let bbox = CubeBox::new(vec![a, c], vec![b, d]).unwrap();
                parts += count_newton(&field, &bbox, &opts).unwrap().newton_count;
            }
        }
        assert_eq!(parts, whole.newton_count, "seed {seed}");
    }
}

#[test]
fn config_validation_lists_every_problem() {
    let mut cfg = config(vec![5.0, 4.0], 0, 1);
    cfg.m = 4;
    let Err(Error::InvalidArgument(msg)) = cfg.validate() else {
        panic!("expected a validation error");
    };
    for needle in ["m must be", "increasing", "realizations"] {
        assert!(msg.contains(needle), "{msg}");
    }
    assert!(run_clt(&cfg).is_err());
}
