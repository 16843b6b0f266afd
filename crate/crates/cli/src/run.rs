//! Subcommand pipelines and the records they persist.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use critfield::critpoints::{
    count_newton, expected_density, CriticalPointSet, CubeBox, NewtonOptions,
};
use critfield::experiments::{
    estimator_crosscheck, run_clt_with, variance_scaling, CountSeries, CrosscheckTable,
    ExperimentConfig, ExperimentRecord, VarianceTable,
};
use critfield::field::{jet_statistics, GridSpec, JetComponent, JetCovarianceTable, Synthesizer};
use critfield::hermite::{
    chaos2_coefficients, invariant_gram, invariant_gram_printed, v2_infinity, Chaos2Geometry,
    ChaosSecondLevel, V2Infinity,
};
use critfield::randmat::{
    eigenvalue_histogram, expect_absdet_s, expect_functionals_mc, fyodorov_absdet,
    semicircle_density, wick_moments, wick_moments_printed, EnsembleParams, Functional, Histogram,
    McOptions,
};
use critfield::rng::derive_seed;
use critfield::spectrum::{
    covariance_jet, nondegeneracy_ratio, psi_profile, spectral_moments, DensitySpec, Nondegeneracy,
    SpectralDensity, SpectralMoments,
};
use critfield::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Command, RunConfig};
use crate::dump::write_dump;
use crate::output::{num, opt, prepare, write_csv, RunDir};

/// Everything a subcommand persists in `record.json`. Wall-clock times are
/// kept out so that reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "record", rename_all = "kebab-case")]
pub enum Record {
    Spectrum(SpectrumRecord),
    Field(FieldRecord),
    Count(CountRecord),
    Randmat(RandmatRecord),
    Chaos(ChaosRecord),
    Clt(CltRecord),
    Crosscheck(CrosscheckRecord),
}

impl Record {
    pub fn kind(&self) -> &'static str {
        match self {
            Record::Spectrum(_) => "spectrum",
            Record::Field(_) => "field",
            Record::Count(_) => "count",
            Record::Randmat(_) => "randmat",
            Record::Chaos(_) => "chaos",
            Record::Clt(_) => "clt",
            Record::Crosscheck(_) => "crosscheck",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JetEntry {
    pub alpha: Vec<u8>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub m: usize,
    pub density: DensitySpec,
    pub moments: SpectralMoments,
    pub nondegeneracy: Nondegeneracy,
    pub spectral_cutoff: f64,
    pub e_absdet_s1: f64,
    pub c_m: f64,
    pub covariance_at_origin: Vec<JetEntry>,
    /// `(r, psi(r e_1))`.
    pub psi: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub m: usize,
    pub density: DensitySpec,
    pub grid: GridSpec,
    pub seeds: Vec<u64>,
    pub spectral_cutoff: f64,
    pub torus_nodes: usize,
    pub jet: JetCovarianceTable,
    pub dump: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub half_width: f64,
    pub replicate: u64,
    pub seed: u64,
    pub newton_count: usize,
    pub failed_cells: usize,
    /// Points by number of negative Hessian eigenvalues.
    pub by_signature: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub m: usize,
    pub density: DensitySpec,
    pub moments: SpectralMoments,
    pub c_m: f64,
    pub rows: Vec<CountRow>,
    /// Points of the first realization at each half-width.
    pub first: Vec<CriticalPointSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WickRow {
    pub functional: String,
    pub mc: f64,
    pub stderr: f64,
    pub exact: Option<f64>,
    pub printed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoRow {
    pub lambda: f64,
    pub mc: f64,
    pub stderr: f64,
    pub formula: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemicircleData {
    pub n: usize,
    pub v: f64,
    pub matrices: usize,
    pub histogram: Histogram,
    pub overlay: Vec<f64>,
    /// Largest deviation over bin centers with `|lambda| <= 1.8 sqrt(v)`.
    pub bulk_sup_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandmatRecord {
    pub m: usize,
    pub u: f64,
    pub v: f64,
    pub samples: usize,
    pub wick: Vec<WickRow>,
    pub rho: Vec<RhoRow>,
    pub semicircle: Option<SemicircleData>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosRecord {
    pub m: usize,
    pub density: DensitySpec,
    pub h: f64,
    pub gram: [[f64; 2]; 2],
    pub gram_printed: [[f64; 2]; 2],
    pub geometry: Chaos2Geometry,
    pub v2: V2Infinity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltRecord {
    pub experiment: ExperimentRecord,
    pub variance: VarianceTable,
    pub chaos: ChaosRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckRecord {
    pub config: ExperimentConfig,
    pub table: CrosscheckTable,
}

/// Wall-clock budget, checked between stages.
struct Deadline {
    start: Instant,
    limit: Option<f64>,
}

impl Deadline {
    fn check(&self, stage: &str) -> critfield::Result<()> {
        match self.limit {
            Some(l) if self.start.elapsed().as_secs_f64() > l => Err(Error::Budget(format!(
                "wall-clock budget of {l} s exhausted after {stage}"
            ))),
            _ => Ok(()),
        }
    }
}

pub struct Invocation {
    pub config: RunConfig,
    pub out: PathBuf,
    pub force: bool,
    pub dry_run: bool,
}

/// Resolved sizes, checked against the budget before anything runs.
pub fn plan(cfg: &RunConfig) -> Result<Vec<String>> {
    let b = &cfg.budget;
    let mut lines = vec![format!(
        "command {} (m = {}, seed = {})",
        cfg.command, cfg.m, cfg.seed
    )];
    if let Some(d) = cfg.density_spec() {
        lines.push(format!("density {} {:?}", d.family, d.params));
    }
    let mut samples = 0usize;
    match cfg.command {
        Command::Randmat | Command::Chaos | Command::Clt => {
            let e = cfg.ensemble();
            samples = samples.max(e.samples);
            lines.push(format!(
                "Monte Carlo samples per expectation: {}",
                e.samples
            ));
            if cfg.command == Command::Randmat {
                lines.push(format!(
                    "shifts {:?}; histogram {} matrices of size {} in {} bins",
                    e.lambdas, e.matrices, e.matrix_size, e.bins
                ));
                samples = samples.max(e.matrices * e.matrix_size);
            }
        }
        _ => {}
    }
    if let Some(e) = &cfg.experiment {
        let w = cfg.density();
        let widths: &[f64] = if cfg.command == Command::Crosscheck {
            &e.half_widths[..1]
        } else {
            &e.half_widths
        };
        for &n in widths {
            let grid = GridSpec::new(cfg.m, n, e.points_per_unit, e.padding)?;
            let synth = Synthesizer::with_budget(&w, grid, b.max_grid_points)?;
            lines.push(format!(
                "N = {n}: window {}^{m}, torus {}^{m}, {} realizations",
                grid.window_nodes(),
                synth.torus_nodes(),
                e.realizations,
                m = cfg.m
            ));
        }
        samples = samples.max(e.realizations * widths.len());
        if cfg.command == Command::Crosscheck {
            lines.push(format!("smoothing widths {:?}", e.epsilons));
        }
    }
    if samples > b.max_samples {
        return Err(Error::Budget(format!(
            "plan needs {samples} samples but the budget allows {}",
            b.max_samples
        ))
        .into());
    }
    if let Some(w) = b.max_wall_seconds {
        lines.push(format!("wall-clock budget {w} s"));
    }
    Ok(lines)
}

/// Runs the pipeline and writes the run directory. Returns the summary.
pub fn execute(inv: &Invocation) -> Result<String> {
    let cfg = &inv.config;
    let lines = plan(cfg)?;
    if inv.dry_run {
        let mut s = format!("dry run; would write {}\n", inv.out.display());
        lines.iter().for_each(|l| s.push_str(&format!("  {l}\n")));
        return Ok(s);
    }
    prepare(&inv.out, inv.force)?;
    let dir = RunDir {
        path: inv.out.clone(),
    };
    dir.write_text("config.toml", &cfg.to_toml())?;
    dir.write_stamp(cfg.seed)?;
    let deadline = Deadline {
        start: Instant::now(),
        limit: cfg.budget.max_wall_seconds,
    };
    let mut summary = match cfg.command {
        Command::Spectrum => spectrum(cfg, &dir)?,
        Command::Field => field(cfg, &dir, &deadline)?,
        Command::Count => count(cfg, &dir, &deadline)?,
        Command::Randmat => randmat(cfg, &dir, &deadline)?,
        Command::Chaos => chaos(cfg, &dir)?,
        Command::Clt => clt(cfg, &dir, &deadline)?,
        Command::Crosscheck => crosscheck(cfg, &dir)?,
    };
    summary.push(format!(
        "wall time: {:.2} s",
        deadline.start.elapsed().as_secs_f64()
    ));
    let text = summary.join("\n") + "\n";
    dir.write_text("summary.txt", &text)?;
    Ok(text)
}

fn save(dir: &RunDir, record: &Record) -> Result<()> {
    dir.write_json("record.json", record)
}

fn c_m_of(moments: &SpectralMoments, m: usize) -> Result<(f64, f64)> {
    let e = expect_absdet_s(m, 1.0)?;
    Ok((e, expected_density(moments, m, e)))
}

fn spectrum(cfg: &RunConfig, dir: &RunDir) -> Result<Vec<String>> {
    let m = cfg.m;
    let w = cfg.density();
    let moments = spectral_moments(&w, m)?;
    let nondeg = nondegeneracy_ratio(&moments, m);
    let cutoff = critfield::field::spectral_cutoff(&w, m)?;
    let (e_absdet, c_m) = c_m_of(&moments, m)?;
    let jet = covariance_jet(&w, m, &vec![0.0; m])?;
    let radii: Vec<f64> = (0..=20).map(|i| 0.5 * i as f64).collect();
    let psi = psi_profile(&w, m, &radii)?;
    let rec = SpectrumRecord {
        m,
        density: w.spec(),
        moments: moments.clone(),
        nondegeneracy: nondeg,
        spectral_cutoff: cutoff,
        e_absdet_s1: e_absdet,
        c_m,
        covariance_at_origin: jet
            .derivatives
            .iter()
            .map(|(a, v)| JetEntry {
                alpha: a.clone(),
                value: *v,
            })
            .collect(),
        psi: radii.iter().zip(&psi).map(|(r, p)| [*r, *p]).collect(),
    };
    write_csv(
        &dir.file("psi.csv"),
        &["r", "psi"],
        &rec.psi
            .iter()
            .map(|[r, p]| vec![num(*r), num(*p)])
            .collect::<Vec<_>>(),
    )?;
    write_csv(
        &dir.file("covariance_jet.csv"),
        &["alpha", "value"],
        &rec.covariance_at_origin
            .iter()
            .map(|e| {
                let a: Vec<String> = e.alpha.iter().map(|x| x.to_string()).collect();
                vec![a.join(" "), num(e.value)]
            })
            .collect::<Vec<_>>(),
    )?;
    save(dir, &Record::Spectrum(rec))?;
    Ok(vec![
        format!(
            "s_m = {}, d_m = {}, h_m = {}",
            moments.s, moments.d, moments.h
        ),
        format!(
            "nondegeneracy: h s / d^2 = {} (degenerate at {}), det R_m = {}",
            nondeg.ratio,
            m as f64 / (m as f64 + 2.0),
            nondeg.det_rm
        ),
        format!("spectral cutoff: {cutoff}"),
        format!("E_S1 |det| = {e_absdet}"),
        format!("C_m(w) = {c_m}"),
    ])
}

fn component_label(c: JetComponent) -> String {
    match c {
        JetComponent::Value => "X".into(),
        JetComponent::Gradient(i) => format!("X_{i}"),
        JetComponent::Hessian(i, j) => format!("X_{i}{j}"),
    }
}

fn field(cfg: &RunConfig, dir: &RunDir, deadline: &Deadline) -> Result<Vec<String>> {
    let m = cfg.m;
    let e = cfg.experiment();
    let w = cfg.density();
    let moments = spectral_moments(&w, m)?;
    let n = e.half_widths[0];
    let grid = GridSpec::new(m, n, e.points_per_unit, e.padding)?;
    let synth = Synthesizer::with_budget(&w, grid, cfg.budget.max_grid_points)?;
    let seeds: Vec<u64> = (0..e.realizations as u64)
        .map(|r| derive_seed(cfg.seed, &[0, r]))
        .collect();
    let fields: Vec<_> = seeds.par_iter().map(|&s| synth.synthesize(s)).collect();
    deadline.check("synthesis")?;
    let dump = if e.dump {
        let path = dir.file("field.bin");
        let f = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        write_dump(BufWriter::new(f), &fields[0], Some(w.spec()))?;
        Some("field.bin".to_string())
    } else {
        None
    };
    let jet = jet_statistics(&fields)?.with_targets(&moments);
    let rows: Vec<Vec<String>> = jet
        .entries
        .iter()
        .map(|x| {
            vec![
                component_label(x.a),
                component_label(x.b),
                num(x.estimate),
                num(x.stderr),
                opt(x.target),
                opt(x.z_score()),
            ]
        })
        .collect();
    write_csv(
        &dir.file("jet.csv"),
        &["a", "b", "estimate", "stderr", "target", "z"],
        &rows,
    )?;
    let worst = jet
        .entries
        .iter()
        .filter_map(|x| x.z_score())
        .fold(0.0f64, f64::max);
    let rec = FieldRecord {
        m,
        density: w.spec(),
        grid,
        seeds,
        spectral_cutoff: synth.cutoff(),
        torus_nodes: synth.torus_nodes(),
        jet,
        dump,
    };
    let mut lines = vec![
        format!(
            "{} realizations on a {}^{m} window (torus {}^{m}), cutoff {}",
            rec.seeds.len(),
            grid.window_nodes(),
            rec.torus_nodes,
            rec.spectral_cutoff
        ),
        format!("largest |z| of jet second moments against s, d, h: {worst:.2}"),
    ];
    if rec.dump.is_some() {
        lines.push("first realization dumped to field.bin".into());
    }
    save(dir, &Record::Field(rec))?;
    Ok(lines)
}

fn count(cfg: &RunConfig, dir: &RunDir, deadline: &Deadline) -> Result<Vec<String>> {
    let m = cfg.m;
    let e = cfg.experiment();
    let w = cfg.density();
    let moments = spectral_moments(&w, m)?;
    let (_, c_m) = c_m_of(&moments, m)?;
    let mut rec = CountRecord {
        m,
        density: w.spec(),
        moments: moments.clone(),
        c_m,
        rows: vec![],
        first: vec![],
    };
    let mut lines = vec![format!("C_m(w) = {c_m}")];
    for (i, &n) in e.half_widths.iter().enumerate() {
        let grid = GridSpec::new(m, n, e.points_per_unit, e.padding)?;
        let synth = Synthesizer::with_budget(&w, grid, cfg.budget.max_grid_points)?;
        let bbox = CubeBox::cube(-n, n, m)?;
        let sets: Vec<(u64, u64, CriticalPointSet)> = (0..e.realizations as u64)
            .into_par_iter()
            .map(|r| {
                let seed = derive_seed(cfg.seed, &[i as u64, r]);
                let f = synth.synthesize(seed);
                let set = count_newton(&f, &bbox, &NewtonOptions::for_field(&f, &moments))?;
                Ok((r, seed, set))
            })
            .collect::<critfield::Result<_>>()?;
        let vol = bbox.volume();
        let mean = sets.iter().map(|s| s.2.newton_count as f64).sum::<f64>() / sets.len() as f64;
        lines.push(format!(
            "N = {n}: mean count {mean:.2} (expected {:.2}), mean/(2N)^m = {:.5}",
            c_m * vol,
            mean / vol
        ));
        for (r, seed, set) in &sets {
            rec.rows.push(CountRow {
                half_width: n,
                replicate: *r,
                seed: *seed,
                newton_count: set.newton_count,
                failed_cells: set.failed_cells,
                by_signature: set.signature_counts(),
            });
        }
        rec.first
            .push(sets.into_iter().next().expect("realizations > 0").2);
        if let Err(err) = deadline.check(&format!("N = {n}")) {
            save(dir, &Record::Count(rec))?;
            return Err(err.into());
        }
    }
    let mut header = vec!["half_width", "replicate", "seed", "count", "failed_cells"];
    let sig: Vec<String> = (0..=m).map(|k| format!("index_{k}")).collect();
    header.extend(sig.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = rec
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![
                num(r.half_width),
                r.replicate.to_string(),
                r.seed.to_string(),
                r.newton_count.to_string(),
                r.failed_cells.to_string(),
            ];
            v.extend(r.by_signature.iter().map(|k| k.to_string()));
            v
        })
        .collect();
    write_csv(&dir.file("counts.csv"), &header, &rows)?;
    let mut header: Vec<String> = vec!["half_width".into()];
    header.extend((0..m).map(|a| format!("t{a}")));
    header.extend(["index", "det_hessian", "gradient_norm"].map(String::from));
    let mut rows = vec![];
    for (set, &n) in rec.first.iter().zip(&e.half_widths) {
        for p in &set.points {
            let mut v = vec![num(n)];
            v.extend(p.location.iter().map(|x| num(*x)));
            v.extend([
                p.hessian_signature.to_string(),
                num(p.det_hessian),
                num(p.gradient_norm),
            ]);
            rows.push(v);
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&dir.file("points.csv"), &header, &rows)?;
    save(dir, &Record::Count(rec))?;
    Ok(lines)
}

fn randmat(cfg: &RunConfig, dir: &RunDir, deadline: &Deadline) -> Result<Vec<String>> {
    let m = cfg.m;
    let e = cfg.ensemble();
    let mut rec = RandmatRecord {
        m,
        u: e.u,
        v: e.v,
        samples: e.samples,
        wick: vec![],
        rho: vec![],
        semicircle: None,
    };
    let mut lines = vec![];
    let flush = |rec: &RandmatRecord, err: Error| -> Result<Vec<String>> {
        save(dir, &Record::Randmat(rec.clone()))?;
        Err(err.into())
    };

    let fs = [
        Functional::P,
        Functional::Q,
        Functional::P2,
        Functional::Pq,
        Functional::Q2,
        Functional::AbsDet,
    ];
    let params = EnsembleParams::new(m, e.u, e.v)?;
    let est = expect_functionals_mc(
        &params,
        &fs,
        e.samples,
        derive_seed(cfg.seed, &[1]),
        &McOptions::default(),
    )?;
    let closed = (e.u == e.v).then(|| (wick_moments(m, e.v), wick_moments_printed(m, e.v)));
    lines.push(format!("Wick moments over S_{m}^(u={}, v={}):", e.u, e.v));
    for (f, x) in fs.iter().zip(&est) {
        let pick = |w: &critfield::randmat::WickMoments| match f {
            Functional::P => Some(w.p),
            Functional::Q => Some(w.q),
            Functional::P2 => Some(w.p2),
            Functional::Pq => Some(w.pq),
            Functional::Q2 => Some(w.q2),
            _ => None,
        };
        let row = WickRow {
            functional: f.to_string(),
            mc: x.mean,
            stderr: x.stderr,
            exact: closed.as_ref().and_then(|c| pick(&c.0)),
            printed: closed.as_ref().and_then(|c| pick(&c.1)),
        };
        let mut l = format!(
            "  E[{}] = {:.4} +- {:.4}",
            row.functional, row.mc, row.stderr
        );
        if let (Some(a), Some(b)) = (row.exact, row.printed) {
            l.push_str(&format!(
                "; exact {a} (z = {:.2}), as printed {b} (z = {:.2})",
                (row.mc - a) / row.stderr,
                (row.mc - b) / row.stderr
            ));
        }
        lines.push(l);
        rec.wick.push(row);
    }
    if let Err(err) = deadline.check("Wick moments") {
        return flush(&rec, err);
    }

    let goe = EnsembleParams::goe(m, e.v)?;
    lines.push(format!("E|det(lambda + B)| over GOE_{m}^{}:", e.v));
    for (k, &lambda) in e.lambdas.iter().enumerate() {
        let x = expect_functionals_mc(
            &goe,
            &[Functional::AbsDet],
            e.samples,
            derive_seed(cfg.seed, &[2, k as u64]),
            &McOptions {
                strata: 1,
                shift: lambda,
            },
        )?[0]
            .clone();
        let formula = if m <= 3 {
            Some(fyodorov_absdet(m, e.v, lambda)?)
        } else {
            None
        };
        let mut l = format!("  lambda = {lambda}: MC {:.5} +- {:.5}", x.mean, x.stderr);
        if let Some(f) = formula {
            l.push_str(&format!(
                ", formula {f:.5} (z = {:.2})",
                (x.mean - f) / x.stderr
            ));
        }
        lines.push(l);
        rec.rho.push(RhoRow {
            lambda,
            mc: x.mean,
            stderr: x.stderr,
            formula,
        });
        if let Err(err) = deadline.check("shifted determinants") {
            return flush(&rec, err);
        }
    }

    // GOE_n^{v/n} has its spectrum on [-2 sqrt v, 2 sqrt v]
    let n = e.matrix_size;
    let edge = 2.25 * e.v.sqrt();
    let histogram = eigenvalue_histogram(
        n,
        e.v / n as f64,
        e.matrices,
        e.bins,
        -edge,
        edge,
        derive_seed(cfg.seed, &[3]),
    )?;
    let centers = histogram.centers();
    let overlay: Vec<f64> = centers
        .iter()
        .map(|&c| semicircle_density(e.v, c))
        .collect();
    let bulk = 1.8 * e.v.sqrt();
    let sup = centers
        .iter()
        .zip(histogram.density.iter().zip(&overlay))
        .filter(|(c, _)| c.abs() <= bulk)
        .map(|(_, (h, s))| (h - s).abs())
        .fold(0.0, f64::max);
    lines.push(format!(
        "semicircle: n = {n}, {} matrices, sup deviation on the bulk {sup:.4}",
        e.matrices
    ));
    rec.semicircle = Some(SemicircleData {
        n,
        v: e.v,
        matrices: e.matrices,
        histogram,
        overlay,
        bulk_sup_deviation: sup,
    });

    write_csv(
        &dir.file("wick.csv"),
        &["functional", "mc", "stderr", "exact", "printed"],
        &rec.wick
            .iter()
            .map(|r| {
                vec![
                    r.functional.clone(),
                    num(r.mc),
                    num(r.stderr),
                    opt(r.exact),
                    opt(r.printed),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    crate::plot::emit(
        &Record::Randmat(rec.clone()),
        crate::plot::PlotKind::RhoIdentity,
        &dir.path,
    )?;
    crate::plot::emit(
        &Record::Randmat(rec.clone()),
        crate::plot::PlotKind::Semicircle,
        &dir.path,
    )?;
    save(dir, &Record::Randmat(rec))?;
    Ok(lines)
}

/// Second-chaos geometry over `S_m^{h_m}` and the limiting variance.
pub fn chaos_record(
    w: &SpectralDensity,
    m: usize,
    samples: usize,
    seed: u64,
) -> critfield::Result<ChaosRecord> {
    let h = ChaosSecondLevel::new(w, m)?.h;
    let geometry = chaos2_coefficients(m, h, samples, seed)?;
    let v2 = v2_infinity(w, m, &geometry)?;
    Ok(ChaosRecord {
        m,
        density: w.spec(),
        h,
        gram: invariant_gram(m, h)?,
        gram_printed: invariant_gram_printed(m, h),
        geometry,
        v2,
    })
}

fn chaos_lines(c: &ChaosRecord) -> Vec<String> {
    let g = &c.geometry;
    vec![
        format!(
            "second chaos over S_{}^h, h = {}: f0 = {:.6}, x = {:.6e} +- {:.1e}, y = {:.6e} +- {:.1e}, z = {:.6}",
            c.m,
            c.h,
            g.f0,
            g.x,
            g.x_se(),
            g.y,
            g.y_se(),
            g.z
        ),
        format!("V_2,inf = {:.6} +- {:.6}", c.v2.value, c.v2.stderr),
    ]
}

fn write_chaos_csv(c: &ChaosRecord, dir: &RunDir) -> Result<()> {
    let g = &c.geometry;
    write_csv(
        &dir.file("chaos.csv"),
        &[
            "m",
            "v",
            "f0",
            "x",
            "x_se",
            "y",
            "y_se",
            "z",
            "z_se",
            "v2_inf",
            "v2_inf_se",
        ],
        &[vec![
            c.m.to_string(),
            num(g.v),
            num(g.f0),
            num(g.x),
            num(g.x_se()),
            num(g.y),
            num(g.y_se()),
            num(g.z),
            num(g.z_se()),
            num(c.v2.value),
            num(c.v2.stderr),
        ]],
    )
}

fn chaos(cfg: &RunConfig, dir: &RunDir) -> Result<Vec<String>> {
    let w = cfg.density();
    let rec = chaos_record(
        &w,
        cfg.m,
        cfg.ensemble().samples,
        derive_seed(cfg.seed, &[4]),
    )?;
    write_chaos_csv(&rec, dir)?;
    let lines = chaos_lines(&rec);
    save(dir, &Record::Chaos(rec))?;
    Ok(lines)
}

fn series_csv(series: &[CountSeries], dir: &RunDir) -> Result<()> {
    let mut counts = vec![];
    let mut zetas = vec![];
    for s in series {
        for (k, (&r, &z)) in s.replicates.iter().zip(&s.counts).enumerate() {
            counts.push(vec![num(s.half_width), r.to_string(), num(z)]);
            zetas.push(vec![
                num(s.half_width),
                r.to_string(),
                num(s.zeta_theoretical[k]),
                num(s.zeta_pooled[k]),
            ]);
        }
    }
    write_csv(
        &dir.file("counts.csv"),
        &["half_width", "replicate", "count"],
        &counts,
    )?;
    write_csv(
        &dir.file("zeta.csv"),
        &["half_width", "replicate", "zeta", "zeta_pooled"],
        &zetas,
    )
}

fn clt(cfg: &RunConfig, dir: &RunDir, deadline: &Deadline) -> Result<Vec<String>> {
    let exp = cfg.experiment_config();
    let m = cfg.m;
    let mut done: Vec<CountSeries> = vec![];
    let result = run_clt_with(&exp, |s| {
        done.push(s.clone());
        deadline.check(&format!("N = {}", s.half_width))
    });
    let mut record = match result {
        Ok(r) => r,
        Err(err) => {
            if !done.is_empty() {
                series_csv(&done, dir)?;
                dir.write_json("partial.json", &done)?;
            }
            return Err(err.into());
        }
    };
    record.wall_time_s = 0.0;
    series_csv(&record.series, dir)?;
    let variance = variance_scaling(&record, 1000, derive_seed(cfg.seed, &[5]))?;
    write_csv(
        &dir.file("variance.csv"),
        &[
            "half_width",
            "realizations",
            "v_n",
            "stderr",
            "ci_low",
            "ci_high",
        ],
        &variance
            .rows
            .iter()
            .map(|r| {
                vec![
                    num(r.half_width),
                    r.realizations.to_string(),
                    num(r.v_n),
                    num(r.stderr),
                    num(r.ci_low),
                    num(r.ci_high),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    let w = cfg.density();
    let chaos = chaos_record(&w, m, cfg.ensemble().samples, derive_seed(cfg.seed, &[4]))?;
    write_chaos_csv(&chaos, dir)?;

    let mut lines = vec![
        format!("E_S1 |det| = {}", record.e_absdet_s1),
        format!("C_m(w) = {}", record.expected_density),
    ];
    for s in &record.series {
        let row = variance.rows.iter().find(|r| r.half_width == s.half_width);
        lines.push(format!(
            "N = {}: R = {} ({} lower bounds, {} failed), mean/(2N)^m = {:.5} +- {}, V_N = {}, KS p = {} [{}]",
            s.half_width,
            s.counts.len(),
            s.lower_bound,
            s.failures.len(),
            s.mean_density,
            s.mean_density_stderr.map_or("n/a".into(), |x| format!("{x:.5}")),
            row.map_or("n/a".into(), |r| format!(
                "{:.4} (95% CI {:.4} to {:.4})",
                r.v_n, r.ci_low, r.ci_high
            )),
            s.ks.as_ref().map_or("n/a".into(), |k| format!("{:.4}", k.p_value)),
            if s.status == critfield::experiments::Sufficiency::Sufficient {
                "sufficient"
            } else {
                "insufficient"
            }
        ));
    }
    if let Some(r) = variance.plateau_ratio {
        lines.push(format!("plateau ratio V_last / V_prev = {r:.4}"));
    }
    lines.extend(chaos_lines(&chaos));
    if let Some(last) = variance.rows.last() {
        let bound = chaos.v2.value - 3.0 * last.stderr;
        lines.push(format!(
            "largest-N V_N = {:.4} vs V_2,inf - 3 se = {bound:.4}: {}",
            last.v_n,
            if last.v_n >= bound {
                "holds"
            } else {
                "violated"
            }
        ));
    }
    let rec = CltRecord {
        experiment: record,
        variance,
        chaos,
    };
    save(dir, &Record::Clt(rec))?;
    Ok(lines)
}

fn crosscheck(cfg: &RunConfig, dir: &RunDir) -> Result<Vec<String>> {
    let exp = cfg.experiment_config();
    let table = estimator_crosscheck(&exp)?;
    let mut header = vec![
        "replicate".to_string(),
        "newton".into(),
        "failed_cells".into(),
    ];
    header.extend(table.epsilons.iter().map(|e| format!("kacrice_eps_{e}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![
                r.replicate.to_string(),
                r.newton.to_string(),
                r.failed_cells.to_string(),
            ];
            v.extend(r.kacrice.iter().map(|x| num(*x)));
            v
        })
        .collect();
    write_csv(&dir.file("crosscheck.csv"), &header, &rows)?;
    let lines = vec![
        format!(
            "N = {}: {} realizations, {} failed",
            table.half_width,
            table.rows.len(),
            table.failures.len()
        ),
        format!(
            "median relative disagreement: {:.4} at eps = {}, {:.4} at eps = {}",
            table.median_relative_fine,
            table.epsilons.last().copied().unwrap_or(f64::NAN),
            table.median_relative_coarse,
            table.epsilons.first().copied().unwrap_or(f64::NAN)
        ),
        format!(
            "coarse smoothing worse in {:.0}% of realizations",
            100.0 * table.coarse_worse_fraction
        ),
    ];
    save(
        dir,
        &Record::Crosscheck(CrosscheckRecord { config: exp, table }),
    )?;
    Ok(lines)
}
