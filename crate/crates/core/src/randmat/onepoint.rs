use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fill_goe;
use super::weyl::{rho_exact, EXACT_MAX_N};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng};

/// Wigner semicircle `1{|l| <= 2 sqrt v} sqrt(4v - l^2) / (2 pi v)`.
pub fn semicircle_density(v: f64, lambda: f64) -> f64 {
    let r = 4.0 * v - lambda * lambda;
    if r <= 0.0 {
        0.0
    } else {
        r.sqrt() / (2.0 * std::f64::consts::PI * v)
    }
}

/// `rho_{n,v}(x)` by quadrature of the Weyl density (`n <= 4`).
pub fn rho_one_point(n: usize, v: f64, x: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "v must be positive, got {v}"
        )));
    }
    rho_exact(n, v, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoMethod {
    WeylQuadrature,
    EigenvalueHistogram,
}

/// `rho_{n,v}` either exactly or as a Gaussian-kernel density estimate of
/// sampled `GOE_n^v` eigenvalues.
#[derive(Debug, Clone)]
pub struct OnePointDensity {
    pub n: usize,
    pub v: f64,
    pub method: RhoMethod,
    eigenvalues: Vec<f64>,
    bandwidth: f64,
}

/// Eigenvalues of `matrices` independent `GOE_n^v` draws, in draw order.
fn sample_eigenvalues(n: usize, v: f64, matrices: usize, seed: u64) -> Vec<f64> {
    (0..matrices)
        .into_par_iter()
        .map(|i| {
            let mut r = rng(derive_seed(seed, &[i as u64]));
            let mut b = DMatrix::zeros(n, n);
            fill_goe(&mut b, v, &mut r);
            b.symmetric_eigenvalues().as_slice().to_vec()
        })
        .flatten()
        .collect()
}

impl OnePointDensity {
    pub fn exact(n: usize, v: f64) -> Result<Self> {
        if n == 0 || n > EXACT_MAX_N {
            return Err(Error::Budget(format!(
                "quadrature path supports 1 <= n <= {EXACT_MAX_N}, got n = {n}"
            )));
        }
        if !(v > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "v must be positive, got {v}"
            )));
        }
        Ok(OnePointDensity {
            n,
            v,
            method: RhoMethod::WeylQuadrature,
            eigenvalues: Vec::new(),
            bandwidth: 0.0,
        })
    }

    /// Kernel estimate from `matrices` samples. Bandwidth is Silverman's
    /// `1.06 sd N^{-1/5}` with `sd^2 = (n+1) v` the exact eigenvalue
    /// variance and `N` the number of eigenvalues.
    pub fn histogram(n: usize, v: f64, matrices: usize, seed: u64) -> Result<Self> {
        if n == 0 || matrices == 0 || !(v > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need n, matrices >= 1 and v > 0 (n = {n}, v = {v})"
            )));
        }
        let mut eigenvalues = sample_eigenvalues(n, v, matrices, seed);
        eigenvalues.sort_by(f64::total_cmp);
        let sd = ((n as f64 + 1.0) * v).sqrt();
        let bandwidth = 1.06 * sd * (eigenvalues.len() as f64).powf(-0.2);
        Ok(OnePointDensity {
            n,
            v,
            method: RhoMethod::EigenvalueHistogram,
            eigenvalues,
            bandwidth,
        })
    }

    /// Exact for `n <= 4`, kernel estimate otherwise.
    pub fn auto(n: usize, v: f64, matrices: usize, seed: u64) -> Result<Self> {
        if n <= EXACT_MAX_N {
            Self::exact(n, v)
        } else {
            Self::histogram(n, v, matrices, seed)
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        match self.method {
            RhoMethod::WeylQuadrature => rho_exact(self.n, self.v, x),
            RhoMethod::EigenvalueHistogram => {
                let b = self.bandwidth;
                let lo = self.eigenvalues.partition_point(|&e| e < x - 9.0 * b);
                let hi = self.eigenvalues.partition_point(|&e| e <= x + 9.0 * b);
                let sum: f64 = self.eigenvalues[lo..hi]
                    .iter()
                    .map(|e| (-0.5 * ((x - e) / b).powi(2)).exp())
                    .sum();
                Ok(sum / (self.eigenvalues.len() as f64 * b * (2.0 * std::f64::consts::PI).sqrt()))
            }
        }
    }
}

/// Normalised eigenvalue histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    pub samples: usize,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

/// Histogram on `[lo, hi)` of the eigenvalues of `matrices` draws of
/// `GOE_n^v`; densities are relative to all eigenvalues, in range or not.
pub fn eigenvalue_histogram(
    n: usize,
    v: f64,
    matrices: usize,
    bins: usize,
    lo: f64,
    hi: f64,
    seed: u64,
) -> Result<Histogram> {
    if n == 0 || matrices == 0 || bins == 0 || !(hi > lo) || !(v > 0.0) {
        return Err(Error::InvalidArgument(
            "histogram needs n, matrices, bins >= 1, hi > lo, v > 0".into(),
        ));
    }
    let eig = sample_eigenvalues(n, v, matrices, seed);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for e in &eig {
        if *e >= lo && *e < hi {
            counts[(((e - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    let total = eig.len() as f64;
    Ok(Histogram {
        edges: (0..=bins).map(|i| lo + i as f64 * width).collect(),
        density: counts.iter().map(|&c| c as f64 / (total * width)).collect(),
        samples: eig.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn semicircle_values() {
        assert!((semicircle_density(1.0, 0.0) - 1.0 / std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(semicircle_density(1.0, 2.0), 0.0);
        assert_eq!(semicircle_density(1.0, -2.0), 0.0);
        assert_eq!(semicircle_density(1.0, 3.0), 0.0);
    }
}
