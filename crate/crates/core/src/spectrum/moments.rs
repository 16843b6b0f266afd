use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::density::SpectralDensity;
use crate::error::{Error, Result};
use crate::quad::integrate_breaks;

const TAIL_REL: f64 = 1e-12;
const GROWTH: f64 = 1.5;
const MAX_SCALES: f64 = 1e6;

fn check_dim(m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "dimension must be at least 2, got {m}"
        )));
    }
    Ok(())
}

/// Radius past which `int w(r) r^k dr` contributes less than `1e-12` of the
/// total. Compactly supported densities return their support.
pub fn radial_cutoff(w: &SpectralDensity, k: u32) -> Result<f64> {
    Ok(tail_scan(w, k)?.0)
}

fn tail_scan(w: &SpectralDensity, k: u32) -> Result<(f64, f64)> {
    let f = |r: f64| w.eval(r) * r.powi(k as i32);
    scan(f, &w.breakpoints(), w.support(), w.scale(), k)
}

fn scan<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    support: Option<f64>,
    scale: f64,
    k: u32,
) -> Result<(f64, f64)> {
    if let Some(sup) = support {
        let v = integrate_breaks(&f, 0.0, sup, breaks, 0.0, 1e-13, 20_000)?;
        return Ok((sup, v.value));
    }
    let mut r = 4.0 * scale;
    let mut total = integrate_breaks(&f, 0.0, r, breaks, 0.0, 1e-13, 20_000)?.value;
    loop {
        let next = r * GROWTH;
        let tail = integrate_breaks(&f, r, next, breaks, 0.0, 1e-13, 20_000)?.value;
        total += tail;
        r = next;
        let edge = f(r) * r;
        if tail.abs() <= TAIL_REL * total.abs() && edge.abs() <= TAIL_REL * total.abs() {
            return Ok((r, total));
        }
        if r > MAX_SCALES * scale || !total.is_finite() {
            return Err(Error::DivergentIntegral { k, radius: r });
        }
    }
}

/// `I_k(w) = int_0^inf w(r) r^k dr`.
pub fn moment_ik(w: &SpectralDensity, k: u32) -> Result<f64> {
    Ok(tail_scan(w, k)?.1)
}

/// `int_0^inf w(r)^2 r^k dr`, the radial part of `L^2` norms of
/// `lambda`-monomials times `w`.
pub fn squared_moment(w: &SpectralDensity, k: u32) -> Result<f64> {
    let f = |r: f64| w.eval(r).powi(2) * r.powi(k as i32);
    Ok(scan(f, &w.breakpoints(), w.support(), w.scale(), k)?.1)
}

/// Variances of `X`, `d_i X` and `d_ii d_jj X` (i != j) together with the
/// radial moments they come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMoments {
    pub m: usize,
    pub s: f64,
    pub d: f64,
    pub h: f64,
    pub ik: BTreeMap<u32, f64>,
}

impl SpectralMoments {
    /// Moments built directly from `(s, d, h)`, with no density behind them.
    pub fn from_sdh(m: usize, s: f64, d: f64, h: f64) -> Result<Self> {
        check_dim(m)?;
        if !(s > 0.0 && d > 0.0 && h > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "moments must be positive: s={s} d={d} h={h}"
            )));
        }
        Ok(SpectralMoments {
            m,
            s,
            d,
            h,
            ik: BTreeMap::new(),
        })
    }

    /// `I_{m+1}^2 < I_{m-1} I_{m+3}`; true when no table is attached.
    pub fn cauchy_schwarz_strict(&self) -> bool {
        let m = self.m as u32;
        match (
            self.ik.get(&(m - 1)),
            self.ik.get(&(m + 1)),
            self.ik.get(&(m + 3)),
        ) {
            (Some(a), Some(b), Some(c)) => b * b < a * c,
            _ => true,
        }
    }
}

/// `s_m, d_m, h_m` from `I_{m-1}, I_{m+1}, I_{m+3}`.
pub fn spectral_moments(w: &SpectralDensity, m: usize) -> Result<SpectralMoments> {
    check_dim(m)?;
    let mu = m as u32;
    let half = m as f64 / 2.0;
    let i0 = moment_ik(w, mu - 1)?;
    let i1 = moment_ik(w, mu + 1)?;
    let i2 = moment_ik(w, mu + 3)?;
    let s = 2f64.powf(1.0 - half) * i0 / gamma(half);
    let d = i1 / (2f64.powf(half) * gamma(half + 1.0));
    let h = i2 / (2f64.powf(half + 1.0) * gamma(half + 2.0));
    let ik = BTreeMap::from([(mu - 1, i0), (mu + 1, i1), (mu + 3, i2)]);
    Ok(SpectralMoments { m, s, d, h, ik })
}

/// Outcome of the second-jet nondegeneracy test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nondegeneracy {
    /// `h s / d^2`; degenerate exactly at `m / (m + 2)`.
    pub ratio: f64,
    pub det_rm: f64,
    pub nondegenerate: bool,
}

/// `det R_m = (2h)^{m-1} ((m+2) h s - m d^2)`.
pub fn nondegeneracy_ratio(moments: &SpectralMoments, m: usize) -> Nondegeneracy {
    let (s, d, h) = (moments.s, moments.d, moments.h);
    let mf = m as f64;
    let det_rm = (2.0 * h).powi(m as i32 - 1) * ((mf + 2.0) * h * s - mf * d * d);
    Nondegeneracy {
        ratio: h * s / (d * d),
        det_rm,
        nondegenerate: det_rm > 0.0,
    }
}

/// Covariance of `(X, d_11 X, ..., d_mm X)` at a point.
pub fn r_matrix(s: f64, d: f64, h: f64, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m + 1, m + 1, |i, j| match (i, j) {
        (0, 0) => s,
        (0, _) | (_, 0) => -d,
        _ if i == j => 3.0 * h,
        _ => h,
    })
}
