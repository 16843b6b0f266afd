//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the verdict lines always reach the
//! console. Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 2 6`.
//!
//! A criterion whose stated target is wrong is reported as FAIL and only
//! accepted if the analysed explanation is confirmed by the same data;
//! anything else makes the binary exit non-zero.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use critfield::critpoints::expected_density;
use critfield::experiments::{estimator_crosscheck, run_clt, variance_scaling, ExperimentConfig};
use critfield::hermite::{
    chaos2_coefficients, diagram_pair_moments, hermite_eval, time_domain_gram, v2_infinity,
    ChaosSecondLevel, DiagramPattern, TimeDomainOptions,
};
use critfield::randmat::{
    asymptotic_targets, eigenvalue_histogram, expect_functional_mc, expect_functionals_mc,
    fyodorov_absdet, semicircle_density, wick_moments, wick_moments_printed, EnsembleParams,
    Functional, McOptions,
};
use critfield::rng::rng;
use critfield::spectrum::{
    covariance_jet, nondegeneracy_ratio, r_matrix, spectral_moments, DensitySpec, Family,
    SpectralDensity,
};
use critfield::stats::{mean_estimate, Estimate};
use nalgebra::{DMatrix, Matrix4, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

enum Verdict {
    Pass,
    Fail,
    /// Fails as stated; the data confirm the recorded explanation.
    KnownFail,
    /// Fails as stated and the explanation does not hold either.
    UnexplainedFail,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome {
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        detail,
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> (Outcome, Duration, bool) {
    let t = Instant::now();
    let o = f();
    let dt = t.elapsed();
    (o, dt, dt <= limit)
}

fn he(n: u8, x: f64) -> f64 {
    hermite_eval(n as usize, x)
}

fn gaussian_spec() -> DensitySpec {
    DensitySpec {
        family: Family::Gaussian,
        params: vec![1.0],
    }
}

fn clt_config(
    half_widths: Vec<f64>,
    realizations: usize,
    ppu: usize,
    seed: u64,
) -> ExperimentConfig {
    ExperimentConfig {
        density: gaussian_spec(),
        m: 2,
        half_widths,
        realizations,
        points_per_unit: ppu,
        padding: 2.0,
        master_seed: seed,
        epsilons: vec![0.2, 0.0125],
    }
}

fn show(e: &Estimate) -> String {
    format!("{:.4}+-{:.4}", e.mean, e.stderr)
}

fn spectral_moments_and_jet() -> Outcome {
    let mut worst: f64 = 0.0;
    for m in [2usize, 3] {
        let w = SpectralDensity::gaussian(1.0, m).unwrap();
        let mo = spectral_moments(&w, m).unwrap();
        for x in [mo.s, mo.d, mo.h] {
            worst = worst.max((x - 1.0).abs());
        }
        // d^alpha exp(-|t|^2/2) at the origin: s, -d delta_ij,
        // h (delta_ij delta_kl + delta_ik delta_jl + delta_il delta_jk), odd orders vanish
        let jet = covariance_jet(&w, m, &vec![0.0; m]).unwrap();
        for (alpha, got) in &jet.derivatives {
            let want: f64 = alpha
                .iter()
                .map(|&a| if a % 2 == 0 { he(a, 0.0) } else { 0.0 })
                .product();
            worst = worst.max((got - want).abs());
        }
        let d = |i: usize, j: usize| f64::from(u8::from(i == j));
        for i in 0..m {
            for j in 0..m {
                worst = worst.max((jet.by_indices(&[i, j]).unwrap() + mo.d * d(i, j)).abs());
                for k in 0..m {
                    for l in 0..m {
                        let want =
                            mo.h * (d(i, j) * d(k, l) + d(i, k) * d(j, l) + d(i, l) * d(j, k));
                        worst = worst.max((jet.by_indices(&[i, j, k, l]).unwrap() - want).abs());
                    }
                }
            }
        }
        worst = worst.max((jet.by_indices(&[]).unwrap() - mo.s).abs());
    }
    outcome(
        worst <= 1e-6,
        format!("max deviation {worst:.2e} (tol 1e-6)"),
    )
}

fn wick_closed_forms() -> Outcome {
    let p = EnsembleParams::new(2, 1.0, 1.0).unwrap();
    let fs = [
        Functional::P,
        Functional::P2,
        Functional::Pq,
        Functional::Q2,
    ];
    let est = expect_functionals_mc(&p, &fs, 1_000_000, 2, &McOptions::default()).unwrap();
    let printed = wick_moments_printed(2, 1.0);
    let exact = wick_moments(2, 1.0);
    let stated = [printed.p, printed.p2, printed.pq, printed.q2];
    let names = ["p", "p2", "pq", "q2"];
    let mut parts = Vec::new();
    let mut all = true;
    let mut only_pq = true;
    for (k, (e, t)) in est.iter().zip(stated).enumerate() {
        let ok = e.within(t, 3.0);
        all &= ok;
        if !ok && names[k] != "pq" {
            only_pq = false;
        }
        parts.push(format!(
            "{}={} vs {t} (z {:.1})",
            names[k],
            show(e),
            e.z_score(t)
        ));
    }
    if all {
        return outcome(true, parts.join(", "));
    }
    // E[pq] = m (m+2)^3 v^2 = 128: tr A ~ N(0, 8) and q = (tr A)^2 / 2 + chi-square parts
    let confirmed = only_pq && est[2].within(exact.pq, 3.0);
    parts.push(format!(
        "E[pq]=128 from Wick pairing: z {:.1}",
        est[2].z_score(exact.pq)
    ));
    Outcome {
        verdict: if confirmed {
            Verdict::KnownFail
        } else {
            Verdict::UnexplainedFail
        },
        detail: parts.join(", "),
    }
}

fn det_rm_closed_form() -> Outcome {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for m in 2..=8usize {
        for _ in 0..20 {
            let s: f64 = r.random_range(0.2..3.0);
            let d: f64 = r.random_range(0.2..3.0);
            let h: f64 = r.random_range(0.2..3.0);
            let mo = critfield::spectrum::SpectralMoments::from_sdh(2, s, d, h).unwrap();
            let closed = nondegeneracy_ratio(&mo, m).det_rm;
            let dense = r_matrix(s, d, h, m).determinant();
            let scale =
                (2.0 * h).powi(m as i32 - 1) * ((m as f64 + 2.0) * h * s + m as f64 * d * d);
            worst = worst.max((closed - dense).abs() / scale);
        }
    }
    let mut ratios = Vec::new();
    let mut nondegenerate = true;
    for m in [2usize, 3] {
        let w = SpectralDensity::gaussian(1.0, m).unwrap();
        let nd = nondegeneracy_ratio(&spectral_moments(&w, m).unwrap(), m);
        let critical = m as f64 / (m as f64 + 2.0);
        nondegenerate &= nd.nondegenerate && (nd.ratio - 1.0).abs() < 1e-9 && nd.ratio > critical;
        ratios.push(format!("m={m}: {:.6} vs {:.4}", nd.ratio, critical));
    }
    outcome(
        worst <= 1e-10 && nondegenerate,
        format!(
            "max rel error {worst:.1e} (tol 1e-10); gaussian hs/d^2 {}",
            ratios.join(", ")
        ),
    )
}

fn fyodorov_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    let mut seed = 400;
    for m in [2usize, 3] {
        for v in [0.5, 1.0] {
            for l in [0.0, 0.5, 1.0, 2.0] {
                seed += 1;
                let p = EnsembleParams::goe(m, v).unwrap();
                let opts = McOptions {
                    strata: 1,
                    shift: l,
                };
                let mc = expect_functionals_mc(&p, &[Functional::AbsDet], 1_000_000, seed, &opts)
                    .unwrap()[0];
                let exact = fyodorov_absdet(m, v, l).unwrap();
                let z = mc.z_score(exact);
                worst = worst.max(z);
                if z > 3.0 {
                    bad.push(format!("m={m} v={v} l={l}: {} vs {exact:.4}", show(&mc)));
                }
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "16 cases, worst |z| {worst:.2}{}",
            if bad.is_empty() {
                String::new()
            } else {
                format!("; {}", bad.join(", "))
            }
        ),
    )
}

fn semicircle() -> Outcome {
    let n = 200;
    let h = eigenvalue_histogram(n, 1.0 / n as f64, 1000, 36, -1.8, 1.8, 5).unwrap();
    let worst = h
        .centers()
        .iter()
        .zip(&h.density)
        .map(|(c, d)| (d - semicircle_density(1.0, *c)).abs())
        .fold(0.0, f64::max);
    outcome(
        worst <= 0.05,
        format!("n=200, 1000 matrices, sup deviation on [-1.8, 1.8] = {worst:.4} (tol 0.05)"),
    )
}

fn ratios_at(m: usize, samples: usize, seed: u64) -> ([f64; 3], [f64; 3]) {
    let p = EnsembleParams::s(m, 0.5).unwrap();
    let fs = [Functional::AbsDet, Functional::PAbsDet, Functional::QAbsDet];
    let est = expect_functionals_mc(&p, &fs, samples, seed, &McOptions::default()).unwrap();
    let t = asymptotic_targets(m).unwrap().semicircle;
    let mut r = [0.0; 3];
    let mut se = [0.0; 3];
    for (k, target) in [t.e_f, t.e_pf, t.e_qf].into_iter().enumerate() {
        r[k] = est[k].mean / target;
        se[k] = est[k].stderr / target;
    }
    (r, se)
}

fn large_m_asymptotics() -> Outcome {
    let (r20, se20) = ratios_at(20, 2_000_000, 6);
    let (r6, _) = ratios_at(6, 2_000_000, 6);
    let band = |r: &[f64; 3]| r.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
    let in_band = r20.iter().all(|x| (0.8..=1.2).contains(x));
    let tighter = band(&r20) < band(&r6);
    let fmt = |r: &[f64; 3]| format!("{:.3}/{:.3}/{:.3}", r[0], r[1], r[2]);
    let detail = format!(
        "m=20 f/pf/qf ratios {} (se {:.3}/{:.3}/{:.3}), band {:.3}; m=6 {} band {:.3}",
        fmt(&r20),
        se20[0],
        se20[1],
        se20[2],
        band(&r20),
        fmt(&r6),
        band(&r6)
    );
    if in_band && tighter {
        return outcome(true, detail);
    }
    // E[q f] carries the factor (1 + 2/m)(1 + 3/(m+2)) over E[q]_leading E[f],
    // which is 1.24 at m = 20: the ratio sits at the band edge
    let finite = r20[0] * (1.0 + 2.0 / 20.0) * (1.0 + 3.0 / 22.0);
    let confirmed = tighter
        && (0.8..=1.2).contains(&r20[0])
        && (0.8..=1.2).contains(&r20[1])
        && (r20[2] - finite).abs() <= 0.03 + 3.0 * se20[2];
    Outcome {
        verdict: if confirmed {
            Verdict::KnownFail
        } else {
            Verdict::UnexplainedFail
        },
        detail: format!("{detail}; finite-m qf estimate {finite:.3}"),
    }
}

fn random_correlation(seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let b: Matrix4<f64> = Matrix4::from_fn(|_, _| r.random_range(-1.0..1.0));
    let c = b * b.transpose();
    let d = Vector4::from_fn(|i, _| 1.0 / c[(i, i)].sqrt());
    let mut out = DMatrix::from_fn(4, 4, |i, j| c[(i, j)] * d[i] * d[j]);
    for i in 0..4 {
        out[(i, i)] = 1.0;
    }
    out
}

fn diagram_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 0..5u64 {
        let c = random_correlation(700 + k);
        let l = c.clone().cholesky().expect("positive definite").l();
        let mut r = rng(710 + k);
        let mut cols: [Vec<f64>; 4] = Default::default();
        for _ in 0..1_000_000 {
            let z = DMatrix::from_fn(4, 1, |_, _| r.sample::<f64, _>(StandardNormal));
            let x = &l * z;
            for (col, pat) in cols.iter_mut().zip(DiagramPattern::ALL) {
                let deg = pat.degrees();
                col.push((0..4).map(|i| hermite_eval(deg[i], x[i])).product());
            }
        }
        for (col, pat) in cols.iter().zip(DiagramPattern::ALL) {
            let target = diagram_pair_moments(&c, pat).unwrap();
            worst = worst.max(mean_estimate(col).z_score(target));
        }
    }
    outcome(
        worst <= 3.0,
        format!("5 correlations x 4 patterns, 1e6 draws each, worst |z| {worst:.2}"),
    )
}

fn parseval_bridge() -> Outcome {
    let w = SpectralDensity::gaussian(1.0, 2).unwrap();
    let freq = ChaosSecondLevel::new(&w, 2).unwrap().gram();
    let time = time_domain_gram(&w, 2, &TimeDomainOptions::default()).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            worst = worst.max((freq[i][j] - time[i][j]).abs() / freq[i][j].abs());
        }
    }
    outcome(
        worst <= 1e-3,
        format!("16 pairs, max rel difference {worst:.2e} (tol 1e-3)"),
    )
}

fn builtin_densities(m: usize) -> Vec<SpectralDensity> {
    vec![
        SpectralDensity::gaussian(1.0, m).unwrap(),
        SpectralDensity::compact_bump(1.0, 3.0, m).unwrap(),
        SpectralDensity::table(&[0.0, 0.5, 1.0, 1.5, 2.0], &[1.0, 0.9, 0.5, 0.15, 0.0], m).unwrap(),
    ]
}

fn v2_positive_and_plateau(clt: &critfield::experiments::ExperimentRecord) -> Outcome {
    let mut parts = Vec::new();
    let mut positive = true;
    let mut gaussian2 = None;
    for m in [2usize, 3] {
        for w in builtin_densities(m) {
            let h = ChaosSecondLevel::new(&w, m).unwrap().h;
            let geo = chaos2_coefficients(m, h, 1_000_000, 9).unwrap();
            let v2 = v2_infinity(&w, m, &geo).unwrap();
            positive &= v2.value > 3.0 * v2.stderr;
            parts.push(format!(
                "{}/{m} {:.4}+-{:.4}",
                w.family(),
                v2.value,
                v2.stderr
            ));
            if m == 2 && w.family() == Family::Gaussian {
                gaussian2 = Some(v2.value);
            }
        }
    }
    let v2 = gaussian2.expect("gaussian m = 2 is built in");
    let table = variance_scaling(clt, 2000, 91).unwrap();
    let last = table.rows.last().expect("variance rows");
    let ok = last.v_n >= v2 - 3.0 * last.stderr;
    outcome(
        positive && ok,
        format!(
            "V2inf {}; V_{} = {:.4}+-{:.4} >= {v2:.4} - 3se",
            parts.join(", "),
            last.half_width,
            last.v_n,
            last.stderr
        ),
    )
}

fn mean_formula() -> Outcome {
    let oracle = expect_functional_mc(
        &EnsembleParams::s(2, 1.0).unwrap(),
        Functional::AbsDet,
        10_000_000,
        10,
    )
    .unwrap();
    let w = SpectralDensity::gaussian(1.0, 2).unwrap();
    let c2 = expected_density(&spectral_moments(&w, 2).unwrap(), 2, oracle.mean);
    let c2_se = c2 * oracle.stderr / oracle.mean;
    let rec = run_clt(&clt_config(vec![10.0], 200, 8, 10)).unwrap();
    let s = &rec.series[0];
    let se = s.mean_density_stderr.unwrap();
    let total = (se * se + c2_se * c2_se).sqrt();
    let z = (s.mean_density - c2).abs() / total;
    outcome(
        z <= 3.0,
        format!(
            "N=10, R={}: mean/(2N)^2 = {:.5}+-{:.5} vs C_2 = {c2:.5}+-{c2_se:.5} (oracle E|det| {}), z {z:.2}",
            s.counts.len(),
            s.mean_density,
            se,
            show(&oracle)
        ),
    )
}

fn variance_plateau(clt: &critfield::experiments::ExperimentRecord) -> Outcome {
    let table = variance_scaling(clt, 2000, 91).unwrap();
    let ratio = table.plateau_ratio.unwrap();
    let s20 = clt.series_for(20.0).unwrap();
    let p = s20.ks.as_ref().map(|k| k.p_value).unwrap_or(0.0);
    let vs: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("V_{}={:.4}", r.half_width, r.v_n))
        .collect();
    outcome(
        (0.8..=1.25).contains(&ratio) && p > 0.01,
        format!(
            "{}; V_20/V_10 = {ratio:.3} (band [0.8, 1.25]); KS p(zeta_20) = {p:.3} with R={}",
            vs.join(" "),
            s20.counts.len()
        ),
    )
}

fn estimator_agreement() -> Outcome {
    let t = estimator_crosscheck(&clt_config(vec![5.0], 50, 10, 12)).unwrap();
    outcome(
        t.median_relative_fine <= 0.02,
        format!(
            "N=5, {} fields: median rel disagreement {:.4} at eps={} ({:.4} at eps={})",
            t.rows.len(),
            t.median_relative_fine,
            t.epsilons.last().unwrap(),
            t.median_relative_coarse,
            t.epsilons[0]
        ),
    )
}

fn determinism() -> Outcome {
    let cfg = clt_config(vec![3.0, 4.0], 30, 8, 13);
    let a = run_clt(&cfg).unwrap();
    let b = run_clt(&cfg).unwrap();
    let mut other = cfg.clone();
    other.master_seed = 14;
    let c = run_clt(&other).unwrap();
    let g1 = chaos2_coefficients(2, 1.0, 100_000, 13).unwrap();
    let g2 = chaos2_coefficients(2, 1.0, 100_000, 13).unwrap();
    let ok =
        a.content_hash() == b.content_hash() && a.content_hash() != c.content_hash() && g1 == g2;
    outcome(
        ok,
        format!(
            "clt record hash {} twice, other seed {}; chaos coefficients equal: {}",
            &a.content_hash()[..12],
            &c.content_hash()[..12],
            g1 == g2
        ),
    )
}

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let run = |k: usize| wanted.is_empty() || wanted.contains(&k);
    let minutes = |m: u64| Duration::from_secs(60 * m);
    let mut clt_record = None;
    let mut clt_time = Duration::ZERO;
    let mut clt = || {
        if clt_record.is_none() {
            let t = Instant::now();
            clt_record = Some(run_clt(&clt_config(vec![5.0, 10.0, 20.0], 500, 8, 11)).unwrap());
            clt_time = t.elapsed();
        }
        (clt_record.clone().unwrap(), clt_time)
    };

    let mut unexpected = 0;
    let mut report = |k: usize, name: &str, (o, dt, in_time): (Outcome, Duration, bool)| {
        let (word, bad) = match (o.verdict, in_time) {
            (Verdict::Pass, true) => ("PASS", false),
            (Verdict::Pass, false) => ("FAIL", true),
            (Verdict::Fail, _) => ("FAIL", true),
            (Verdict::KnownFail, _) => ("FAIL", false),
            (Verdict::UnexplainedFail, _) => ("FAIL", true),
        };
        let note = match (bad, word) {
            (false, "FAIL") => " [analysed: see notes]",
            (true, _) if !in_time => " [over time limit]",
            _ => "",
        };
        println!(
            "{word} criterion {k:>2} {name}: {} ({:.1}s){note}",
            o.detail,
            dt.as_secs_f64()
        );
        if bad {
            unexpected += 1;
        }
    };

    if run(1) {
        report(
            1,
            "spectral moments",
            timed(Duration::from_secs(1), spectral_moments_and_jet),
        );
    }
    if run(2) {
        report(
            2,
            "wick moments",
            timed(Duration::from_secs(30), wick_closed_forms),
        );
    }
    if run(3) {
        report(
            3,
            "det R_m",
            timed(Duration::from_secs(1), det_rm_closed_form),
        );
    }
    if run(4) {
        report(4, "fyodorov identity", timed(minutes(2), fyodorov_identity));
    }
    if run(5) {
        report(5, "semicircle", timed(minutes(1), semicircle));
    }
    if run(6) {
        report(
            6,
            "large-m asymptotics",
            timed(minutes(10), large_m_asymptotics),
        );
    }
    if run(7) {
        report(
            7,
            "diagram identities",
            timed(minutes(1), diagram_identities),
        );
    }
    if run(8) {
        report(8, "parseval bridge", timed(minutes(5), parseval_bridge));
    }
    if run(9) {
        let (rec, t0) = clt();
        let (o, dt, _) = timed(minutes(20), || v2_positive_and_plateau(&rec));
        let total = dt + t0;
        report(
            9,
            "V2inf and plateau level",
            (o, total, total <= minutes(20)),
        );
    }
    if run(10) {
        report(10, "mean formula", timed(minutes(15), mean_formula));
    }
    if run(11) {
        let (rec, t0) = clt();
        let (o, dt, _) = timed(minutes(60), || variance_plateau(&rec));
        let total = dt + t0;
        report(
            11,
            "variance plateau and KS",
            (o, total, total <= minutes(60)),
        );
    }
    if run(12) {
        report(
            12,
            "estimator agreement",
            timed(minutes(10), estimator_agreement),
        );
    }
    if run(13) {
        report(13, "determinism", timed(minutes(5), determinism));
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} criterion(s) failed");
        ExitCode::FAILURE
    }
}
