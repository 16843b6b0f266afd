//! Gaussian symmetric-matrix ensembles `S_m^{u,v} = GOE_m^v + N(0,u) 1`:
//! sampling, Monte Carlo expectations, the Weyl eigenvalue density, the
//! one-point correlation function and the absolute-determinant identities.

mod asymptotics;
mod onepoint;
mod weyl;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng};
use crate::stats::{jackknife_mean, Block, Estimate};

pub use asymptotics::{
    asymptotic_targets, expect_absdet_s, expect_absdet_s_with, fyodorov_absdet,
    fyodorov_absdet_with, wick_moments, wick_moments_printed, AsymptoticPrediction,
    AsymptoticTargets, WickMoments,
};
pub use onepoint::{
    eigenvalue_histogram, rho_one_point, semicircle_density, Histogram, OnePointDensity, RhoMethod,
};
pub use weyl::{ln_z_m, ln_z_m_v, weyl_joint_density};

/// Parameters of `S_m^{u,v}`: `E[a_ii^2] = u + 2v`, `E[a_ii a_jj] = u`,
/// `E[a_ij^2] = v` for `i != j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub m: usize,
    pub u: f64,
    pub v: f64,
}

impl EnsembleParams {
    pub fn new(m: usize, u: f64, v: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument(
                "matrix size must be at least 1".into(),
            ));
        }
        if !(u >= 0.0 && u.is_finite()) || !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need u >= 0 and v > 0, got u = {u}, v = {v}"
            )));
        }
        Ok(EnsembleParams { m, u, v })
    }

    /// `GOE_m^v = S_m^{0,v}`.
    pub fn goe(m: usize, v: f64) -> Result<Self> {
        Self::new(m, 0.0, v)
    }

    /// `S_m^v = S_m^{v,v}`.
    pub fn s(m: usize, v: f64) -> Result<Self> {
        Self::new(m, v, v)
    }

    /// Covariance `E[a_ij a_kl]` of two entries.
    pub fn covariance(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let d = |a: usize, b: usize| (a == b) as u8 as f64;
        self.u * d(i, j) * d(k, l) + self.v * (d(i, k) * d(j, l) + d(i, l) * d(j, k))
    }
}

/// Fill `b` with a `GOE_m^v` sample (upper triangle row by row, mirrored).
fn fill_goe<R: Rng>(b: &mut DMatrix<f64>, v: f64, r: &mut R) {
    let m = b.nrows();
    let (sd_diag, sd_off) = ((2.0 * v).sqrt(), v.sqrt());
    for i in 0..m {
        for j in i..m {
            let z: f64 = r.sample(StandardNormal);
            if i == j {
                b[(i, i)] = sd_diag * z;
            } else {
                b[(i, j)] = sd_off * z;
                b[(j, i)] = sd_off * z;
            }
        }
    }
}

/// One draw `A = B + X 1`, `B ~ GOE_m^v`, `X ~ N(0, u)` (X is drawn first).
pub fn sample_matrix<R: Rng>(params: &EnsembleParams, r: &mut R) -> DMatrix<f64> {
    let x: f64 = r.sample::<f64, _>(StandardNormal) * params.u.sqrt();
    let mut a = DMatrix::zeros(params.m, params.m);
    fill_goe(&mut a, params.v, r);
    for i in 0..params.m {
        a[(i, i)] += x;
    }
    a
}

/// Invariant functionals: `p = (tr A)^2`, `q = tr A^2`, `f = |det A|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Functional {
    AbsDet,
    PAbsDet,
    QAbsDet,
    P,
    Q,
    P2,
    Pq,
    Q2,
    AbsDet2,
}

impl Functional {
    pub const ALL: [Functional; 9] = [
        Functional::AbsDet,
        Functional::PAbsDet,
        Functional::QAbsDet,
        Functional::P,
        Functional::Q,
        Functional::P2,
        Functional::Pq,
        Functional::Q2,
        Functional::AbsDet2,
    ];

    fn needs_det(self) -> bool {
        matches!(
            self,
            Functional::AbsDet | Functional::PAbsDet | Functional::QAbsDet | Functional::AbsDet2
        )
    }

    fn from_parts(self, p: f64, q: f64, f: f64) -> f64 {
        match self {
            Functional::AbsDet => f,
            Functional::PAbsDet => p * f,
            Functional::QAbsDet => q * f,
            Functional::P => p,
            Functional::Q => q,
            Functional::P2 => p * p,
            Functional::Pq => p * q,
            Functional::Q2 => q * q,
            Functional::AbsDet2 => f * f,
        }
    }

    pub fn eval(self, a: &DMatrix<f64>) -> f64 {
        let tr = a.trace();
        let q = a.iter().map(|x| x * x).sum();
        let f = if self.needs_det() {
            a.determinant().abs()
        } else {
            0.0
        };
        self.from_parts(tr * tr, q, f)
    }
}

impl std::fmt::Display for Functional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Functional::AbsDet => "absdet",
            Functional::PAbsDet => "p-absdet",
            Functional::QAbsDet => "q-absdet",
            Functional::P => "p",
            Functional::Q => "q",
            Functional::P2 => "p2",
            Functional::Pq => "pq",
            Functional::Q2 => "q2",
            Functional::AbsDet2 => "absdet2",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Functional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Functional::ALL
            .into_iter()
            .find(|f| f.to_string() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown functional '{s}'")))
    }
}

/// Minimum sample count accepted by the Monte Carlo estimators.
pub const MIN_SAMPLES: usize = 10_000;
const BLOCKS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    /// Strata for the shift `X`: each replicate draws one `X` per stratum
    /// (by inverse CDF) and averages; 1 means plain sampling.
    pub strata: usize,
    /// Deterministic multiple of the identity added to every draw, for
    /// `E[u(lambda + A)]`.
    pub shift: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            strata: 1,
            shift: 0.0,
        }
    }
}

/// Per-block sums of several functionals from one stream of matrices,
/// indexed `[functional][block]`.
///
/// Samples are split into 100 blocks with seeds derived from `seed`, so the
/// result does not depend on the number of threads. With `strata > 1` each
/// replicate averages one draw per stratum and the block counts are
/// replicates, not matrices.
pub fn functional_blocks(
    params: &EnsembleParams,
    functionals: &[Functional],
    n_samples: usize,
    seed: u64,
    opts: &McOptions,
) -> Result<Vec<Vec<Block>>> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::Budget(format!(
            "{n_samples} samples requested, at least {MIN_SAMPLES} needed"
        )));
    }
    let strata = opts.strata.max(1);
    let replicates = n_samples / strata;
    if replicates < BLOCKS {
        return Err(Error::InvalidArgument(format!(
            "{strata} strata leave too few replicates"
        )));
    }
    let m = params.m;
    let need_det = functionals.iter().any(|f| f.needs_det());
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let sizes: Vec<usize> = (0..BLOCKS)
        .map(|b| replicates / BLOCKS + usize::from(b < replicates % BLOCKS))
        .collect();
    let blocks: Vec<Vec<Block>> = sizes
        .par_iter()
        .enumerate()
        .map(|(b, &size)| {
            let mut r = rng(derive_seed(seed, &[b as u64]));
            let mut sums = vec![0.0; functionals.len()];
            let mut a = DMatrix::zeros(m, m);
            let mut acc = vec![0.0; functionals.len()];
            for _ in 0..size {
                acc.iter_mut().for_each(|x| *x = 0.0);
                for s in 0..strata {
                    let z = if strata == 1 {
                        r.sample(StandardNormal)
                    } else {
                        unit.inverse_cdf((s as f64 + r.random::<f64>()) / strata as f64)
                    };
                    let x = z * params.u.sqrt() + opts.shift;
                    fill_goe(&mut a, params.v, &mut r);
                    let mut tr = 0.0;
                    for i in 0..m {
                        a[(i, i)] += x;
                        tr += a[(i, i)];
                    }
                    let q: f64 = a.iter().map(|x| x * x).sum();
                    let f = if need_det { a.determinant().abs() } else { 0.0 };
                    for (slot, func) in acc.iter_mut().zip(functionals) {
                        *slot += func.from_parts(tr * tr, q, f);
                    }
                }
                for (s, x) in sums.iter_mut().zip(&acc) {
                    *s += x / strata as f64;
                }
            }
            sums.into_iter()
                .map(|sum| Block { sum, count: size })
                .collect()
        })
        .collect();
    Ok((0..functionals.len())
        .map(|k| blocks.iter().map(|b| b[k]).collect())
        .collect())
}

/// Monte Carlo means of several functionals with delete-one-block
/// jackknife standard errors (see [`functional_blocks`]).
pub fn expect_functionals_mc(
    params: &EnsembleParams,
    functionals: &[Functional],
    n_samples: usize,
    seed: u64,
    opts: &McOptions,
) -> Result<Vec<Estimate>> {
    let strata = opts.strata.max(1);
    Ok(
        functional_blocks(params, functionals, n_samples, seed, opts)?
            .iter()
            .map(|per| {
                let mut e = jackknife_mean(per);
                e.samples = per.iter().map(|b| b.count).sum::<usize>() * strata;
                e
            })
            .collect(),
    )
}

/// Monte Carlo mean of one functional with a jackknife standard error.
pub fn expect_functional_mc(
    params: &EnsembleParams,
    functional: Functional,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    Ok(expect_functionals_mc(
        params,
        &[functional],
        n_samples,
        seed,
        &McOptions::default(),
    )?[0])
}

/// `E_{S_m^v}[u] = (2v)^{k/2} E_{S_m^{1/2}}[u]` for `u` homogeneous of degree `k`.
pub fn homogeneous_rescale(value_at_half: f64, degree: u32, v: f64) -> f64 {
    (2.0 * v).powf(degree as f64 / 2.0) * value_at_half
}
