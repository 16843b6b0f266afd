use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::onepoint::OnePointDensity;
use super::weyl::{rho_exact, rho_gaussian_integral, EXACT_MAX_N};
use crate::error::{Error, Result};
use crate::quad::integrate_breaks;

/// `ln C_m`, `C_m = 2^{3/2} Gamma((m+3)/2)`.
pub fn ln_c_m(m: usize) -> f64 {
    1.5 * std::f64::consts::LN_2 + ln_gamma((m as f64 + 3.0) / 2.0)
}

fn check(m: usize, v: f64) -> Result<()> {
    if m == 0 || !(v > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need m >= 1 and v > 0, got m = {m}, v = {v}"
        )));
    }
    Ok(())
}

/// `E_{GOE_m^v} |det(lambda + B)| = (2v)^{(m+1)/2} C_m exp(lambda^2/4v) rho_{m+1,v}(lambda)`,
/// with `rho` computed by quadrature (`m <= 3`).
pub fn fyodorov_absdet(m: usize, v: f64, lambda: f64) -> Result<f64> {
    check(m, v)?;
    if m + 1 > EXACT_MAX_N {
        return Err(Error::Budget(format!(
            "exact rho_(m+1) needs m <= {}, got {m}",
            EXACT_MAX_N - 1
        )));
    }
    let rho = rho_exact(m + 1, v, lambda)?;
    Ok(fy1_prefactor(m, v, lambda) * rho)
}

fn fy1_prefactor(m: usize, v: f64, lambda: f64) -> f64 {
    ((m as f64 + 1.0) / 2.0 * (2.0 * v).ln() + ln_c_m(m) + lambda * lambda / (4.0 * v)).exp()
}

/// As [`fyodorov_absdet`] with a supplied `rho_{m+1,v}`.
pub fn fyodorov_absdet_with(m: usize, lambda: f64, rho: &OnePointDensity) -> Result<f64> {
    check(m, rho.v)?;
    if rho.n != m + 1 {
        return Err(Error::InvalidArgument(format!(
            "need rho_(m+1) = rho_{}, got rho_{}",
            m + 1,
            rho.n
        )));
    }
    Ok(fy1_prefactor(m, rho.v, lambda) * rho.eval(lambda)?)
}

fn fy2_prefactor(m: usize, v: f64) -> f64 {
    ((m as f64 + 1.0) / 2.0 * (2.0 * v).ln() + ln_c_m(m)).exp()
        / (2.0 * std::f64::consts::PI * v).sqrt()
}

/// `E_{S_m^v} |det A| = (2v)^{(m+1)/2} C_m / sqrt(2 pi v) int rho_{m+1,v}(l) exp(-l^2/4v) dl`,
/// the Gaussian average of [`fyodorov_absdet`] over the shift (`m <= 3`).
pub fn expect_absdet_s(m: usize, v: f64) -> Result<f64> {
    check(m, v)?;
    if m + 1 > EXACT_MAX_N {
        return Err(Error::Budget(format!(
            "exact rho_(m+1) needs m <= {}, got {m}",
            EXACT_MAX_N - 1
        )));
    }
    Ok(fy2_prefactor(m, v) * rho_gaussian_integral(m + 1, v, 1.0 / (4.0 * v))?)
}

/// As [`expect_absdet_s`] with a supplied `rho_{m+1,v}` (e.g. a kernel estimate).
pub fn expect_absdet_s_with(m: usize, rho: &OnePointDensity) -> Result<f64> {
    check(m, rho.v)?;
    if rho.n != m + 1 {
        return Err(Error::InvalidArgument(format!(
            "need rho_(m+1) = rho_{}, got rho_{}",
            m + 1,
            rho.n
        )));
    }
    let v = rho.v;
    let reach = (160.0 * v).sqrt();
    let r = integrate_breaks(
        |x| rho.eval(x).unwrap_or(f64::NAN) * (-x * x / (4.0 * v)).exp(),
        -reach,
        reach,
        &[0.0],
        1e-14,
        1e-9,
        4000,
    )?;
    Ok(fy2_prefactor(m, v) * r.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticPrediction {
    /// `E[|det A|]` over `S_m^{1/2}`.
    pub e_f: f64,
    /// `E[(tr A)^2 |det A|]`.
    pub e_pf: f64,
    /// `E[tr(A^2) |det A|]`.
    pub e_qf: f64,
}

/// Large-`m` predictions over `S_m^{1/2}`.
///
/// `printed` uses the stated constants: `C_m sqrt(2/pi) m^{-1/2}`,
/// `2 C_m / sqrt(pi) m^{3/2}` and `C_m / sqrt(2 pi) m^{7/2}`.
/// `semicircle` redoes the leading order with `rho_{inf,1/2}(0) = sqrt(2)/pi`
/// from the semicircle law and `E[q f] ~ E[q] E[f]` (`q` concentrates):
/// `(2/pi) C_m m^{-1/2}`, `(2/pi) C_m m^{3/2}`, `(1/pi) C_m m^{3/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticTargets {
    pub m: usize,
    pub ln_c_m: f64,
    pub printed: AsymptoticPrediction,
    pub semicircle: AsymptoticPrediction,
}

pub fn asymptotic_targets(m: usize) -> Result<AsymptoticTargets> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "asymptotics need m >= 2, got {m}"
        )));
    }
    let pi = std::f64::consts::PI;
    let lc = ln_c_m(m);
    let mf = m as f64;
    let at = |ln_const: f64, power: f64| (lc + ln_const + power * mf.ln()).exp();
    Ok(AsymptoticTargets {
        m,
        ln_c_m: lc,
        printed: AsymptoticPrediction {
            e_f: at(0.5 * (2.0 / pi).ln(), -0.5),
            e_pf: at((2.0 / pi.sqrt()).ln(), 1.5),
            e_qf: at(-0.5 * (2.0 * pi).ln(), 3.5),
        },
        semicircle: AsymptoticPrediction {
            e_f: at((2.0 / pi).ln(), -0.5),
            e_pf: at((2.0 / pi).ln(), 1.5),
            e_qf: at((1.0 / pi).ln(), 1.5),
        },
    })
}

/// Closed-form moments of `p = (tr A)^2` and `q = tr A^2` over `S_m^v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WickMoments {
    pub p: f64,
    pub q: f64,
    pub p2: f64,
    pub pq: f64,
    pub q2: f64,
}

/// Exact Wick moments: `tr A ~ N(0, m(m+2)v)`, `Var q = 6m(m+2)v^2`,
/// `E[pq] = m(m+2)^3 v^2`, `E[q^2] = m(m+2)(m^2+2m+6) v^2`.
pub fn wick_moments(m: usize, v: f64) -> WickMoments {
    let mf = m as f64;
    let e = mf * (mf + 2.0) * v;
    WickMoments {
        p: e,
        q: e,
        p2: 3.0 * e * e,
        pq: mf * (mf + 2.0).powi(3) * v * v,
        q2: e * e + 6.0 * mf * (mf + 2.0) * v * v,
    }
}

/// The closed forms as usually quoted: `E[pq] = (m^3+3m^2+12m+11) m v^2`,
/// `E[q^2] = m v^2 (2m^3+2m^2+9m+14)`. Both disagree with sampling (the
/// second only for `m != 2`); kept for reporting.
pub fn wick_moments_printed(m: usize, v: f64) -> WickMoments {
    let mf = m as f64;
    let v2 = v * v;
    WickMoments {
        p: mf * (mf + 2.0) * v,
        q: mf * (mf + 2.0) * v,
        p2: 3.0 * mf * mf * (mf + 2.0).powi(2) * v2,
        pq: (mf.powi(3) + 3.0 * mf * mf + 12.0 * mf + 11.0) * mf * v2,
        q2: mf * v2 * (2.0 * mf.powi(3) + 2.0 * mf * mf + 9.0 * mf + 14.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wick_examples() {
        let w = wick_moments(2, 1.0);
        assert_eq!(
            (w.p, w.q, w.p2, w.pq, w.q2),
            (8.0, 8.0, 192.0, 128.0, 112.0)
        );
        let w = wick_moments(3, 0.5);
        assert!((w.pq - 93.75).abs() < 1e-12 && (w.q2 - 78.75).abs() < 1e-12);
        let printed = wick_moments_printed(2, 1.0);
        assert_eq!((printed.p2, printed.pq, printed.q2), (192.0, 110.0, 112.0));
    }

    #[test]
    fn log_c_m_growth() {
        // ln C_m = (m/2) ln m - (m/2)(1 + ln 2) + O(ln m): the ratio creeps up to 1
        let ratio = |m: f64| {
            (1.5 * std::f64::consts::LN_2 + ln_gamma((m + 3.0) / 2.0)) / (0.5 * m * m.ln())
        };
        let seq: Vec<f64> = [1e2, 1e4, 1e6, 1e9, 1e12].into_iter().map(ratio).collect();
        assert!(seq.windows(2).all(|w| w[0] < w[1] && w[1] < 1.0), "{seq:?}");
        assert!(1.0 - seq[4] < 0.07);
        assert!((ratio(20.0) - ln_c_m(20) / (10.0 * 20f64.ln())).abs() < 1e-14);
        assert!(ln_c_m(400).is_finite());
    }
}
