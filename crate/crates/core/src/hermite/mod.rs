//! Hermite polynomials, the diagram formulas for products of Hermite
//! polynomials of correlated Gaussians, and the second Wiener chaos of the
//! critical-point count.

mod chaos;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::factorial;

use crate::error::{Error, Result};

pub use chaos::{
    chaos2_coefficients, invariant_gram, invariant_gram_printed, time_domain_gram, v2_infinity,
    Chaos2Geometry, ChaosSecondLevel, ChaosTerm, TimeDomainOptions, V2Infinity,
};

/// Probabilists' Hermite polynomial `H_n(x)` by `H_{n+1} = x H_n - n H_{n-1}`.
pub fn hermite_eval(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `H_n(x) = n! sum_r (-1)^r x^{n-2r} / (2^r r! (n-2r)!)`.
pub fn hermite_explicit(n: usize, x: f64) -> f64 {
    let nf = factorial(n as u64);
    (0..=n / 2)
        .map(|r| {
            let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
            sign * x.powi((n - 2 * r) as i32)
                / (2f64.powi(r as i32) * factorial(r as u64) * factorial((n - 2 * r) as u64))
        })
        .sum::<f64>()
        * nf
}

/// `H_n(0)`: zero for odd `n`, `(-1)^r (2r)! / (2^r r!)` for `n = 2r`.
pub fn hermite_at_zero(n: usize) -> f64 {
    if n % 2 == 1 {
        return 0.0;
    }
    let r = n / 2;
    let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
    sign * factorial(n as u64) / (2f64.powi(r as i32) * factorial(r as u64))
}

/// A multi-index with `H_alpha(0)` and the coefficient `d(alpha)` of the
/// Hermite expansion of the smoothed delta at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteCoeffs {
    pub alpha: Vec<u32>,
    pub h_alpha0: f64,
    pub d_alpha: f64,
}

impl HermiteCoeffs {
    pub fn new(alpha: &[u32], d_m: f64) -> Result<Self> {
        Ok(HermiteCoeffs {
            alpha: alpha.to_vec(),
            h_alpha0: alpha.iter().map(|&a| hermite_at_zero(a as usize)).product(),
            d_alpha: d_alpha(alpha, alpha.len(), d_m)?,
        })
    }
}

/// `d(alpha) = (2 pi d_m)^{-m/2} H_alpha(0) / alpha!`.
pub fn d_alpha(alpha: &[u32], m: usize, d_m: f64) -> Result<f64> {
    if alpha.len() != m {
        return Err(Error::InvalidArgument(format!(
            "multi-index has length {}, expected {m}",
            alpha.len()
        )));
    }
    if !(d_m > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "d_m must be positive, got {d_m}"
        )));
    }
    if alpha.iter().any(|a| a % 2 == 1) {
        return Ok(0.0);
    }
    let (mut h0, mut fact) = (1.0, 1.0);
    for &a in alpha {
        h0 *= hermite_at_zero(a as usize);
        fact *= factorial(a as u64);
    }
    Ok((2.0 * std::f64::consts::PI * d_m).powf(-(m as f64) / 2.0) * h0 / fact)
}

/// Products covered by the closed-form diagram identities. Indices refer to
/// rows of the correlation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagramPattern {
    /// `E[H_1(X_1) H_1(X_2)] = c_12`
    H1H1,
    /// `E[H_2(X_1) H_2(X_2)] = 2 c_12^2`
    H2H2,
    /// `E[H_2(X_1) H_1(X_2) H_1(X_3)] = 2 c_12 c_13`
    H2H1H1,
    /// `E[H_1(X_1) ... H_1(X_4)] = c_12 c_34 + c_13 c_24 + c_14 c_23`
    H1H1H1H1,
}

impl DiagramPattern {
    pub const ALL: [DiagramPattern; 4] = [
        DiagramPattern::H1H1,
        DiagramPattern::H2H2,
        DiagramPattern::H2H1H1,
        DiagramPattern::H1H1H1H1,
    ];

    /// Hermite degree applied to each of `X_1..X_4`.
    pub fn degrees(self) -> [usize; 4] {
        match self {
            DiagramPattern::H1H1 => [1, 1, 0, 0],
            DiagramPattern::H2H2 => [2, 2, 0, 0],
            DiagramPattern::H2H1H1 => [2, 1, 1, 0],
            DiagramPattern::H1H1H1H1 => [1, 1, 1, 1],
        }
    }
}

/// Checks unit diagonal, symmetry and positive semi-definiteness.
pub fn check_correlation(c: &DMatrix<f64>) -> Result<()> {
    if !c.is_square() {
        return Err(Error::InvalidCorrelation("matrix is not square".into()));
    }
    let n = c.nrows();
    for i in 0..n {
        if (c[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidCorrelation(format!(
                "c[{i}][{i}] = {} != 1",
                c[(i, i)]
            )));
        }
        for j in 0..i {
            if (c[(i, j)] - c[(j, i)]).abs() > 1e-12 {
                return Err(Error::InvalidCorrelation(format!(
                    "not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let min = SymmetricEigen::new(c.clone()).eigenvalues.min();
    if min < -1e-12 {
        return Err(Error::InvalidCorrelation(format!(
            "not positive semi-definite (eigenvalue {min:e})"
        )));
    }
    Ok(())
}

/// Closed-form diagram moment for `pattern` under the 4x4 correlation `c`.
pub fn diagram_pair_moments(c: &DMatrix<f64>, pattern: DiagramPattern) -> Result<f64> {
    if c.nrows() != 4 {
        return Err(Error::InvalidCorrelation(format!(
            "expected a 4x4 matrix, got {}x{}",
            c.nrows(),
            c.ncols()
        )));
    }
    check_correlation(c)?;
    let r = |i: usize, j: usize| c[(i - 1, j - 1)];
    Ok(match pattern {
        DiagramPattern::H1H1 => r(1, 2),
        DiagramPattern::H2H2 => 2.0 * r(1, 2).powi(2),
        DiagramPattern::H2H1H1 => 2.0 * r(1, 2) * r(1, 3),
        DiagramPattern::H1H1H1H1 => r(1, 2) * r(3, 4) + r(1, 3) * r(2, 4) + r(1, 4) * r(2, 3),
    })
}

/// Average of `prod_i u_i^{e_i}` over the uniform unit sphere in `R^m`,
/// `m = exponents.len()`: `prod (e_i - 1)!! / (m (m+2) ... (m + |e| - 2))`
/// when every `e_i` is even, zero otherwise.
pub fn sphere_average(exponents: &[u32]) -> f64 {
    if exponents.iter().any(|e| e % 2 == 1) {
        return 0.0;
    }
    let m = exponents.len() as f64;
    let mut num = 1.0;
    for &e in exponents {
        let mut k = e as i64 - 1;
        while k > 1 {
            num *= k as f64;
            k -= 2;
        }
    }
    let half: u32 = exponents.iter().sum::<u32>() / 2;
    let den: f64 = (0..half).map(|k| m + 2.0 * k as f64).product();
    num / den
}

/// Surface area of the unit sphere in `R^m`.
pub fn sphere_area(m: usize) -> f64 {
    let half = m as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(half) / statrs::function::gamma::gamma(half)
}
