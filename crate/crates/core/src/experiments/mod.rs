//! End-to-end Monte Carlo checks on critical-point counts in growing cubes:
//! the mean density, the growth of the variance, and the normality of
//! `zeta_N = (2N)^{-m/2} (Z_N - E[Z_N])`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::critpoints::{
    count_kacrice_smoothed, count_newton, expected_density, CubeBox, KacRiceOptions, NewtonOptions,
};
use crate::error::{Error, Result};
use crate::field::{FieldRealization, GridSpec, Synthesizer};
use crate::randmat::expect_absdet_s;
use crate::rng::{derive_seed, rng};
use crate::spectrum::{spectral_moments, DensitySpec, SpectralDensity, SpectralMoments};
use crate::stats::{ks_normal, sample_variance, KsResult};

/// Fewest realizations for which summary statistics are reported as usable.
pub const MIN_REALIZATIONS: usize = 30;
/// Fewest samples accepted by [`normality_test`].
pub const MIN_KS_SAMPLES: usize = 100;
/// Largest tolerated fraction of failed realizations.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

const CROSSCHECK_STREAM: u64 = 0xc0c0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub density: DensitySpec,
    pub m: usize,
    /// Cube half-widths `N`, increasing.
    pub half_widths: Vec<f64>,
    /// Realizations per half-width.
    pub realizations: usize,
    pub points_per_unit: usize,
    /// Periodic synthesis box relative to the cube (at least 2).
    pub padding: f64,
    pub master_seed: u64,
    /// Smoothing widths for the Kac-Rice cross-check.
    pub epsilons: Vec<f64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(2..=3).contains(&self.m) {
            problems.push(format!("m must be 2 or 3, got {}", self.m));
        }
        if self.half_widths.is_empty() {
            problems.push("half_widths is empty".into());
        }
        if self
            .half_widths
            .iter()
            .any(|n| !(*n > 0.0 && n.is_finite()))
        {
            problems.push("half_widths must be positive".into());
        }
        if self.half_widths.windows(2).any(|w| w[1] <= w[0]) {
            problems.push("half_widths must be increasing".into());
        }
        if self.realizations == 0 {
            problems.push("realizations must be positive".into());
        }
        if self.points_per_unit == 0 {
            problems.push("points_per_unit must be positive".into());
        }
        if !(self.padding >= 2.0) {
            problems.push(format!("padding must be at least 2, got {}", self.padding));
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            problems.push("epsilons must be positive".into());
        }
        if let Err(e) = self.density.build(self.m.max(2)) {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }

    pub fn density(&self) -> Result<SpectralDensity> {
        self.density.build(self.m)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sufficiency {
    Sufficient,
    /// Fewer than [`MIN_REALIZATIONS`] realizations: numbers are reported
    /// but should not back any statistical claim.
    Insufficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationFailure {
    pub replicate: u64,
    pub error: String,
}

/// Counts and derived statistics for one half-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSeries {
    pub half_width: f64,
    /// Replicate index of every kept count.
    pub replicates: Vec<u64>,
    pub counts: Vec<f64>,
    pub failures: Vec<RealizationFailure>,
    /// Realizations with unresolved sign-change cells (count may be low).
    pub lower_bound: usize,
    /// `C_m(w) (2N)^m`.
    pub expected: f64,
    pub pooled_mean: f64,
    /// `zeta_N` centred at `expected`.
    pub zeta_theoretical: Vec<f64>,
    /// `zeta_N` centred at `pooled_mean`.
    pub zeta_pooled: Vec<f64>,
    /// Mean of `Z_N / (2N)^m`.
    pub mean_density: f64,
    pub mean_density_stderr: Option<f64>,
    /// `V_N = var(Z_N) / (2N)^m`.
    pub v_n: Option<f64>,
    /// KS of `zeta_theoretical` against `N(0, V_N)`.
    pub ks: Option<KsResult>,
    pub status: Sufficiency,
}

impl CountSeries {
    pub fn volume(&self, m: usize) -> f64 {
        (2.0 * self.half_width).powi(m as i32)
    }

    /// `zeta` recomputed from the stored counts and a centering.
    pub fn zeta(&self, m: usize, center: f64) -> Vec<f64> {
        let norm = self.volume(m).sqrt();
        self.counts.iter().map(|z| (z - center) / norm).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub version: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub moments: SpectralMoments,
    /// `E_{S_m^1} |det A|`.
    pub e_absdet_s1: f64,
    /// `C_m(w)`.
    pub expected_density: f64,
    pub series: Vec<CountSeries>,
    pub wall_time_s: f64,
}

impl ExperimentRecord {
    /// Hash of the record with the wall time zeroed; equal seeds and
    /// configs give equal hashes.
    pub fn content_hash(&self) -> String {
        let mut copy = self.clone();
        copy.wall_time_s = 0.0;
        sha256_hex(&serde_json::to_vec(&copy).expect("record serializes"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidArgument(format!("bad record: {e}")))
    }

    pub fn series_for(&self, half_width: f64) -> Option<&CountSeries> {
        self.series.iter().find(|s| s.half_width == half_width)
    }
}

/// Errors when more than 5% of `total` realizations failed.
pub fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::TooManyFailures { failed, total });
    }
    Ok(())
}

fn summarize(
    half_width: f64,
    m: usize,
    c_m: f64,
    replicates: Vec<u64>,
    counts: Vec<f64>,
    failures: Vec<RealizationFailure>,
    lower_bound: usize,
) -> CountSeries {
    let vol = (2.0 * half_width).powi(m as i32);
    let r = counts.len();
    let expected = c_m * vol;
    let pooled_mean = if r == 0 {
        f64::NAN
    } else {
        counts.iter().sum::<f64>() / r as f64
    };
    let norm = vol.sqrt();
    let zeta_theoretical: Vec<f64> = counts.iter().map(|z| (z - expected) / norm).collect();
    let zeta_pooled: Vec<f64> = counts.iter().map(|z| (z - pooled_mean) / norm).collect();
    let (v_n, stderr) = if r >= 2 {
        let var = sample_variance(&counts);
        (Some(var / vol), Some((var / r as f64).sqrt() / vol))
    } else {
        (None, None)
    };
    let ks = match v_n {
        Some(v) if r >= MIN_KS_SAMPLES && v > 0.0 => normality_test(&zeta_theoretical, v).ok(),
        _ => None,
    };
    CountSeries {
        half_width,
        replicates,
        counts,
        failures,
        lower_bound,
        expected,
        pooled_mean,
        zeta_theoretical,
        zeta_pooled,
        mean_density: pooled_mean / vol,
        mean_density_stderr: stderr,
        v_n,
        ks,
        status: if r >= MIN_REALIZATIONS {
            Sufficiency::Sufficient
        } else {
            Sufficiency::Insufficient
        },
    }
}

/// Synthesizes `realizations` fields per half-width, counts critical points
/// in `[-N, N)^m` with the Newton locator and forms `zeta_N`. Realization
/// `r` at half-width index `i` uses seed `derive_seed(master, [i, r])`, so
/// the record does not depend on the thread count.
pub fn run_clt(config: &ExperimentConfig) -> Result<ExperimentRecord> {
    run_clt_with(config, |_| Ok(()))
}

/// As [`run_clt`], calling `progress` after each half-width; an error from
/// `progress` stops the run and is returned.
pub fn run_clt_with<F>(config: &ExperimentConfig, mut progress: F) -> Result<ExperimentRecord>
where
    F: FnMut(&CountSeries) -> Result<()>,
{
    config.validate()?;
    let start = std::time::Instant::now();
    let m = config.m;
    let w = config.density()?;
    let moments = spectral_moments(&w, m)?;
    let e_absdet = expect_absdet_s(m, 1.0)?;
    let c_m = expected_density(&moments, m, e_absdet);
    let mut series = Vec::with_capacity(config.half_widths.len());
    for (i, &n) in config.half_widths.iter().enumerate() {
        let grid = GridSpec::new(m, n, config.points_per_unit, config.padding)?;
        let synth = Synthesizer::new(&w, grid)?;
        let bbox = CubeBox::cube(-n, n, m)?;
        let outcomes: Vec<Result<(f64, bool)>> = (0..config.realizations as u64)
            .into_par_iter()
            .map(|r| {
                let field = synth.synthesize(derive_seed(config.master_seed, &[i as u64, r]));
                let opts = NewtonOptions::for_field(&field, &moments);
                let set = count_newton(&field, &bbox, &opts)?;
                Ok((set.newton_count as f64, set.is_lower_bound()))
            })
            .collect();
        let (mut replicates, mut counts, mut failures, mut lower) = (vec![], vec![], vec![], 0);
        for (r, out) in outcomes.into_iter().enumerate() {
            match out {
                Ok((z, low)) => {
                    replicates.push(r as u64);
                    counts.push(z);
                    lower += low as usize;
                }
                Err(e) => failures.push(RealizationFailure {
                    replicate: r as u64,
                    error: e.to_string(),
                }),
            }
        }
        check_failures(failures.len(), config.realizations)?;
        let s = summarize(n, m, c_m, replicates, counts, failures, lower);
        progress(&s)?;
        series.push(s);
    }
    Ok(ExperimentRecord {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        config_hash: config.hash(),
        moments,
        e_absdet_s1: e_absdet,
        expected_density: c_m,
        series,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub half_width: f64,
    pub realizations: usize,
    pub v_n: f64,
    /// Bootstrap standard error and 95% percentile interval.
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTable {
    pub rows: Vec<VarianceRow>,
    /// `V_{N_last} / V_{N_prev}`.
    pub plateau_ratio: Option<f64>,
    /// At least three half-widths with 100 realizations each.
    pub sufficient: bool,
}

/// `V_N = var(Z_N) / (2N)^m` with bootstrap intervals (`resamples`
/// resamples per half-width, seeded from `seed`).
pub fn variance_scaling(
    record: &ExperimentRecord,
    resamples: usize,
    seed: u64,
) -> Result<VarianceTable> {
    let m = record.config.m;
    let mut rows = Vec::new();
    for (i, s) in record.series.iter().enumerate() {
        if s.counts.len() < 2 {
            continue;
        }
        let vol = s.volume(m);
        let v_of = |xs: &[f64]| sample_variance(xs) / vol;
        let v_n = v_of(&s.counts);
        let mut boot = bootstrap(&s.counts, v_of, resamples, derive_seed(seed, &[i as u64]));
        boot.sort_by(f64::total_cmp);
        let stderr = if boot.len() >= 2 {
            sample_variance(&boot).sqrt()
        } else {
            0.0
        };
        rows.push(VarianceRow {
            half_width: s.half_width,
            realizations: s.counts.len(),
            v_n,
            stderr,
            ci_low: quantile(&boot, 0.025).unwrap_or(v_n),
            ci_high: quantile(&boot, 0.975).unwrap_or(v_n),
        });
    }
    let plateau_ratio = match rows.as_slice() {
        [.., a, b] if a.v_n > 0.0 => Some(b.v_n / a.v_n),
        _ => None,
    };
    let sufficient = rows.len() >= 3 && rows.iter().all(|r| r.realizations >= 100);
    Ok(VarianceTable {
        rows,
        plateau_ratio,
        sufficient,
    })
}

fn bootstrap<F: Fn(&[f64]) -> f64>(xs: &[f64], stat: F, resamples: usize, seed: u64) -> Vec<f64> {
    let n = xs.len();
    let mut r = rng(seed);
    let mut buf = vec![0.0; n];
    (0..resamples)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = xs[r.random_range(0..n)];
            }
            stat(&buf)
        })
        .collect()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// One-sample KS test of `samples` against `N(0, variance)`.
pub fn normality_test(samples: &[f64], variance: f64) -> Result<KsResult> {
    if samples.len() < MIN_KS_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "normality test needs at least {MIN_KS_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    ks_normal(samples, 0.0, variance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckRow {
    pub replicate: u64,
    pub newton: usize,
    pub failed_cells: usize,
    /// Smoothed counts, one per entry of the epsilon list.
    pub kacrice: Vec<f64>,
}

impl CrosscheckRow {
    /// `|Newton - KacRice(eps_k)| / max(Newton, 1)`.
    pub fn relative_error(&self, k: usize) -> f64 {
        (self.kacrice[k] - self.newton as f64).abs() / (self.newton.max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckTable {
    pub half_width: f64,
    /// Sorted from coarse to fine.
    pub epsilons: Vec<f64>,
    pub rows: Vec<CrosscheckRow>,
    pub failures: Vec<RealizationFailure>,
    pub median_relative_fine: f64,
    pub median_relative_coarse: f64,
    /// Fraction of realizations where the coarsest width disagrees more than the finest.
    pub coarse_worse_fraction: f64,
}

/// Newton count and smoothed Kac-Rice counts of one field on `bbox`.
pub fn crosscheck_field(
    field: &FieldRealization,
    bbox: &CubeBox,
    moments: &SpectralMoments,
    epsilons: &[f64],
    replicate: u64,
) -> Result<CrosscheckRow> {
    let set = count_newton(field, bbox, &NewtonOptions::for_field(field, moments))?;
    let opts = KacRiceOptions::default();
    let kacrice = epsilons
        .iter()
        .map(|&e| Ok(count_kacrice_smoothed(field, bbox, e, &opts)?.value))
        .collect::<Result<Vec<f64>>>()?;
    Ok(CrosscheckRow {
        replicate,
        newton: set.newton_count,
        failed_cells: set.failed_cells,
        kacrice,
    })
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Newton against smoothed Kac-Rice on the first half-width of `config`
/// (at most 5), `config.realizations` fields.
pub fn estimator_crosscheck(config: &ExperimentConfig) -> Result<CrosscheckTable> {
    config.validate()?;
    let n = config.half_widths[0];
    if n > 5.0 {
        return Err(Error::Budget(format!(
            "cross-check runs on half-widths up to 5, got {n}"
        )));
    }
    if config.epsilons.is_empty() {
        return Err(Error::InvalidArgument("no epsilons to cross-check".into()));
    }
    let mut epsilons = config.epsilons.clone();
    epsilons.sort_by(|a, b| b.total_cmp(a));
    epsilons.dedup();
    let m = config.m;
    let w = config.density()?;
    let moments = spectral_moments(&w, m)?;
    let grid = GridSpec::new(m, n, config.points_per_unit, config.padding)?;
    let synth = Synthesizer::new(&w, grid)?;
    let bbox = CubeBox::cube(-n, n, m)?;
    let outcomes: Vec<Result<CrosscheckRow>> = (0..config.realizations as u64)
        .into_par_iter()
        .map(|r| {
            let field = synth.synthesize(derive_seed(config.master_seed, &[CROSSCHECK_STREAM, r]));
            crosscheck_field(&field, &bbox, &moments, &epsilons, r)
        })
        .collect();
    let (mut rows, mut failures) = (vec![], vec![]);
    for (r, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(RealizationFailure {
                replicate: r as u64,
                error: e.to_string(),
            }),
        }
    }
    check_failures(failures.len(), config.realizations)?;
    let last = epsilons.len() - 1;
    let fine = median(rows.iter().map(|r| r.relative_error(last)).collect());
    let coarse = median(rows.iter().map(|r| r.relative_error(0)).collect());
    let worse = rows
        .iter()
        .filter(|r| r.relative_error(0) > r.relative_error(last))
        .count();
    Ok(CrosscheckTable {
        half_width: n,
        coarse_worse_fraction: worse as f64 / rows.len().max(1) as f64,
        epsilons,
        rows,
        failures,
        median_relative_fine: fine,
        median_relative_coarse: coarse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_and_median() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.0), Some(1.0));
        assert_eq!(quantile(&xs, 1.0), Some(4.0));
        assert_eq!(quantile(&xs, 0.5), Some(2.5));
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(xs.to_vec()), 2.5);
    }

    #[test]
    fn constant_counts_have_zero_variance() {
        let s = summarize(2.0, 2, 0.1, (0..40).collect(), vec![7.0; 40], vec![], 0);
        assert_eq!(s.v_n, Some(0.0));
        assert_eq!(s.status, Sufficiency::Sufficient);
        assert!(s.zeta_pooled.iter().all(|&z| z == 0.0));
        assert!(s.ks.is_none());
    }

    #[test]
    fn failure_threshold() {
        assert!(check_failures(5, 100).is_ok());
        assert!(matches!(
            check_failures(6, 100),
            Err(Error::TooManyFailures {
                failed: 6,
                total: 100
            })
        ));
        assert!(check_failures(0, 1).is_ok());
    }
}
