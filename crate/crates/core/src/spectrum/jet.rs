use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::density::SpectralDensity;
use super::moments::radial_cutoff;
use crate::bessel::scaled_j_ladder;
use crate::error::{Error, Result};
use crate::quad::integrate_breaks_vec;

/// Highest derivative order supported by the kernel.
pub const MAX_ORDER: usize = 4;
const MAX_PANELS: usize = 20_000;
const TRAPEZOID_POINTS: usize = 1_000_000;

/// Radial representation of the covariance `C(t) = g(|t|^2 / 2)`.
///
/// `g^{(j)}(s) = (-1)^j E_j(rho)` with `rho = |t|` and
/// `E_j(rho) = int_0^inf w(r) r^{m-1+2j} (r rho)^{-nu_j} J_{nu_j}(r rho) dr`,
/// `nu_j = m/2 - 1 + j`.
#[derive(Debug, Clone)]
pub struct CovarianceKernel {
    density: SpectralDensity,
    m: usize,
    r_max: f64,
    at_zero: [f64; MAX_ORDER + 1],
}

impl CovarianceKernel {
    pub fn new(w: &SpectralDensity, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!(
                "dimension must be at least 2, got {m}"
            )));
        }
        let r_max = radial_cutoff(w, (m + 2 * MAX_ORDER - 1) as u32)?;
        let mut at_zero = [0.0; MAX_ORDER + 1];
        for (j, slot) in at_zero.iter_mut().enumerate() {
            let k = (m - 1 + 2 * j) as u32;
            let nu = m as f64 / 2.0 - 1.0 + j as f64;
            *slot = super::moments::moment_ik(w, k)? / (2f64.powf(nu) * gamma(nu + 1.0));
        }
        Ok(CovarianceKernel {
            density: w.clone(),
            m,
            r_max,
            at_zero,
        })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// `[g(s), g'(s), ..., g''''(s)]` at `s = rho^2 / 2`.
    pub fn g_derivatives(&self, rho: f64) -> Result<[f64; MAX_ORDER + 1]> {
        let rho = rho.abs();
        let mut e = if rho == 0.0 {
            self.at_zero
        } else {
            self.radial(rho)?
        };
        for (j, v) in e.iter_mut().enumerate() {
            if j % 2 == 1 {
                *v = -*v;
            }
        }
        Ok(e)
    }

    fn radial(&self, rho: f64) -> Result<[f64; MAX_ORDER + 1]> {
        let m = self.m;
        let twice_nu0 = (m - 2) as u32;
        let w = &self.density;
        let f = |r: f64| {
            let wr = w.eval(r);
            let mut out = [0.0; MAX_ORDER + 1];
            if wr == 0.0 {
                return out;
            }
            let bj = scaled_j_ladder(twice_nu0, MAX_ORDER + 1, r * rho);
            let mut p = wr * r.powi(m as i32 - 1);
            for j in 0..=MAX_ORDER {
                out[j] = p * bj[j];
                p *= r * r;
            }
            out
        };
        let period = std::f64::consts::PI / rho;
        let n_breaks = (self.r_max / period).ceil() as usize;
        let scale = self.at_zero.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        if n_breaks < MAX_PANELS / 2 {
            let mut breaks: Vec<f64> = (1..n_breaks).map(|i| i as f64 * period).collect();
            breaks.extend(w.breakpoints());
            if let Ok((v, _)) = integrate_breaks_vec(
                &f,
                0.0,
                self.r_max,
                &breaks,
                1e-13 * scale,
                1e-12,
                MAX_PANELS,
            ) {
                return Ok(v);
            }
        }
        // Fallback: fine trapezoid, cross-checked against every other node.
        let n = TRAPEZOID_POINTS;
        let hstep = self.r_max / n as f64;
        let mut out = [0.0; MAX_ORDER + 1];
        let mut coarse = [0.0; MAX_ORDER + 1];
        for i in 0..=n {
            let v = f(i as f64 * hstep);
            let edge = i == 0 || i == n;
            for j in 0..=MAX_ORDER {
                let wt = if edge { 0.5 } else { 1.0 };
                out[j] += wt * v[j] * hstep;
                if i % 2 == 0 {
                    coarse[j] += wt * v[j] * 2.0 * hstep;
                }
            }
        }
        let worst = out
            .iter()
            .zip(&coarse)
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
        if worst > 1e-8 * scale {
            return Err(Error::Quadrature(format!(
                "oscillatory integral at |t| = {rho}: oscillation period {period:e} against radius {}; \
                 trapezoid refinement moved the result by {worst:e}",
                self.r_max
            )));
        }
        Ok(out)
    }

    /// `d^k C / dt_{i_1} ... dt_{i_k}` at `t`, indices 0-based, `k <= 4`.
    pub fn derivative(&self, t: &[f64], indices: &[usize]) -> Result<f64> {
        let rho = t.iter().map(|x| x * x).sum::<f64>().sqrt();
        let g = self.g_derivatives(rho)?;
        Ok(derivative_from_g(&g, t, indices))
    }
}

/// Faa di Bruno for `g(|t|^2/2)`: sum over pairings of the index list into
/// singletons (contributing `t_i`) and pairs (contributing `delta_ij`); the
/// derivative order of `g` is the number of blocks.
pub fn derivative_from_g(g: &[f64; MAX_ORDER + 1], t: &[f64], indices: &[usize]) -> f64 {
    fn rec(g: &[f64; MAX_ORDER + 1], t: &[f64], rest: &[usize], blocks: usize, factor: f64) -> f64 {
        if factor == 0.0 {
            return 0.0;
        }
        let Some((&first, tail)) = rest.split_first() else {
            return g[blocks] * factor;
        };
        let mut sum = rec(g, t, tail, blocks + 1, factor * t[first]);
        for (k, &other) in tail.iter().enumerate() {
            if other == first {
                let mut remaining = tail.to_vec();
                remaining.remove(k);
                sum += rec(g, t, &remaining, blocks + 1, factor);
            }
        }
        sum
    }
    assert!(
        indices.len() <= MAX_ORDER,
        "derivative order above {MAX_ORDER}"
    );
    rec(g, t, indices, 0, 1.0)
}

/// All partial derivatives `d^alpha C(t)` with `|alpha| <= 4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceJet {
    pub t: Vec<f64>,
    /// Keyed by multi-index (exponent per coordinate).
    pub derivatives: BTreeMap<Vec<u8>, f64>,
}

impl CovarianceJet {
    pub fn get(&self, alpha: &[u8]) -> Option<f64> {
        self.derivatives.get(alpha).copied()
    }

    /// Derivative addressed by an index list such as `[0, 0, 1, 1]`.
    pub fn by_indices(&self, indices: &[usize]) -> Option<f64> {
        let mut alpha = vec![0u8; self.t.len()];
        for &i in indices {
            *alpha.get_mut(i)? += 1;
        }
        self.get(&alpha)
    }

    pub fn max_abs(&self) -> f64 {
        self.derivatives.values().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Every multi-index of length `m` with total order at most `max_order`.
pub fn multi_indices(m: usize, max_order: usize) -> Vec<Vec<u8>> {
    fn rec(m: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for a in 0..=left {
            cur.push(a as u8);
            rec(m, left - a, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, max_order, &mut Vec::new(), &mut out);
    out.sort_by_key(|a| {
        (
            a.iter().map(|&x| x as usize).sum::<usize>(),
            std::cmp::Reverse(a.clone()),
        )
    });
    out
}

fn indices_of(alpha: &[u8]) -> Vec<usize> {
    alpha
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| std::iter::repeat_n(i, a as usize))
        .collect()
}

/// `d^alpha C(t)` for all `|alpha| <= 4`.
pub fn covariance_jet(w: &SpectralDensity, m: usize, t: &[f64]) -> Result<CovarianceJet> {
    CovarianceKernel::new(w, m)?.jet(t)
}

impl CovarianceKernel {
    pub fn jet(&self, t: &[f64]) -> Result<CovarianceJet> {
        if t.len() != self.m {
            return Err(Error::InvalidArgument(format!(
                "point has {} coordinates, expected {}",
                t.len(),
                self.m
            )));
        }
        let rho = t.iter().map(|x| x * x).sum::<f64>().sqrt();
        let g = self.g_derivatives(rho)?;
        let derivatives = multi_indices(self.m, MAX_ORDER)
            .into_iter()
            .map(|alpha| {
                let v = derivative_from_g(&g, t, &indices_of(&alpha));
                (alpha, v)
            })
            .collect();
        Ok(CovarianceJet {
            t: t.to_vec(),
            derivatives,
        })
    }
}

/// `psi(t) = max_{|alpha| <= 4} |d^alpha C(t)|`.
pub fn psi_envelope(w: &SpectralDensity, m: usize, t: &[f64]) -> Result<f64> {
    Ok(covariance_jet(w, m, t)?.max_abs())
}

/// `psi` along the first axis at the given radii; used to spot-check decay.
pub fn psi_profile(w: &SpectralDensity, m: usize, radii: &[f64]) -> Result<Vec<f64>> {
    let kernel = CovarianceKernel::new(w, m)?;
    radii
        .iter()
        .map(|&r| {
            let mut t = vec![0.0; m];
            t[0] = r;
            Ok(kernel.jet(&t)?.max_abs())
        })
        .collect()
}
