use libm::{erf, erfc};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quad::integrate_breaks;

/// `ln Z_m` with `Z_m = 2^{m/2} m! prod_{j=1}^m Gamma(j/2)`.
pub fn ln_z_m(m: usize) -> f64 {
    let mf = m as f64;
    0.5 * mf * std::f64::consts::LN_2
        + ln_gamma(mf + 1.0)
        + (1..=m).map(|j| ln_gamma(j as f64 / 2.0)).sum::<f64>()
}

/// `ln Z_m(v) = (m(m+1)/4) ln(2v) + ln Z_m`, the normalisation of `Q_{m,v}`.
pub fn ln_z_m_v(m: usize, v: f64) -> f64 {
    let mf = m as f64;
    mf * (mf + 1.0) / 4.0 * (2.0 * v).ln() + ln_z_m(m)
}

/// Joint eigenvalue density of `GOE_m^v` on unordered `R^m`:
/// `prod_{i<j} |l_i - l_j| prod_i exp(-l_i^2 / 4v) / Z_m(v)`.
pub fn weyl_joint_density(v: f64, lambda: &[f64]) -> Result<f64> {
    let m = lambda.len();
    if m == 0 || !(v > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need m >= 1 and v > 0, got m = {m}, v = {v}"
        )));
    }
    let mut ln = -ln_z_m_v(m, v);
    for i in 0..m {
        ln -= lambda[i] * lambda[i] / (4.0 * v);
        for j in i + 1..m {
            let d = (lambda[i] - lambda[j]).abs();
            if d == 0.0 {
                return Ok(0.0);
            }
            ln += d.ln();
        }
    }
    Ok(ln.exp())
}

/// `int_a^b t^k exp(-t^2 / 4v) dt` for `k = 0..=kmax` (infinite ends allowed).
fn partial_moments(a: f64, b: f64, v: f64, kmax: usize) -> Vec<f64> {
    let s = 2.0 * v.sqrt();
    let (x, y) = (a / s, b / s);
    // difference erf(y) - erf(x) without cancellation in the tails
    let diff = if x >= 0.0 {
        erfc(x) - erfc(y)
    } else if y <= 0.0 {
        erfc(-y) - erfc(-x)
    } else {
        erf(y) - erf(x)
    };
    let sigma2 = 2.0 * v;
    let edge = |t: f64, k: usize| -> f64 {
        if t.is_infinite() {
            0.0
        } else {
            t.powi(k as i32) * (-t * t / (4.0 * v)).exp()
        }
    };
    let mut m = vec![0.0; kmax + 1];
    m[0] = (std::f64::consts::PI * v).sqrt() * diff;
    for k in 1..=kmax {
        let lower = if k >= 2 {
            (k - 1) as f64 * m[k - 2]
        } else {
            0.0
        };
        m[k] = sigma2 * (lower - (edge(b, k - 1) - edge(a, k - 1)));
    }
    m
}

/// `int_R prod_j |t - c_j| exp(-t^2 / 4v) dt` in closed form.
fn inner_closed_form(points: &[f64], v: f64) -> f64 {
    let k = points.len();
    // coefficients of prod_j (t - c_j), lowest degree first
    let mut coef = vec![1.0];
    for &c in points {
        let mut next = vec![0.0; coef.len() + 1];
        for (d, &a) in coef.iter().enumerate() {
            next[d + 1] += a;
            next[d] -= c * a;
        }
        coef = next;
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for i in 0..=k {
        let a = if i == 0 {
            f64::NEG_INFINITY
        } else {
            sorted[i - 1]
        };
        let b = if i == k { f64::INFINITY } else { sorted[i] };
        if a >= b {
            continue;
        }
        let mom = partial_moments(a, b, v, k);
        let value: f64 = coef.iter().zip(&mom).map(|(c, m)| c * m).sum();
        // i of the points lie below t, so k - i factors are negative
        total += if (k - i) % 2 == 0 { value } else { -value };
    }
    total
}

/// `int_{R^remaining} prod |l_i - l_j| prod exp(-l_i^2/4v)` over the free
/// variables, including their Vandermonde factors with `fixed`.
fn nested(fixed: &[f64], remaining: usize, v: f64) -> Result<f64> {
    if remaining == 1 {
        return Ok(inner_closed_form(fixed, v));
    }
    let reach = (160.0 * v).sqrt();
    let breaks = fixed.to_vec();
    let scale = (4.0 * std::f64::consts::PI * v).sqrt()
        * (2.0 * reach).powi((fixed.len() + remaining) as i32);
    let f = |a: f64| -> f64 {
        let mut pts = breaks.clone();
        let weight: f64 =
            pts.iter().map(|c| (a - c).abs()).product::<f64>() * (-a * a / (4.0 * v)).exp();
        if weight == 0.0 {
            return 0.0;
        }
        pts.push(a);
        weight * nested(&pts, remaining - 1, v).unwrap_or(f64::NAN)
    };
    let r = integrate_breaks(f, -reach, reach, &breaks, 1e-15 * scale, 1e-11, 4000)?;
    if !r.value.is_finite() {
        return Err(Error::Quadrature("non-finite inner integral".into()));
    }
    Ok(r.value)
}

/// Largest `n` for which `rho_{n,v}` is computed by quadrature.
pub(crate) const EXACT_MAX_N: usize = 4;

/// `rho_{n,v}(x) = Z_n(v)^{-1} int Q_{n,v}(x, l_2, ..., l_n) dl` by nested
/// quadrature (the innermost integral in closed form).
pub(crate) fn rho_exact(n: usize, v: f64, x: f64) -> Result<f64> {
    if n == 0 || n > EXACT_MAX_N {
        return Err(Error::Budget(format!(
            "quadrature path supports 1 <= n <= {EXACT_MAX_N}, got n = {n}"
        )));
    }
    let w = (-x * x / (4.0 * v) - ln_z_m_v(n, v)).exp();
    if n == 1 {
        return Ok(w);
    }
    Ok(w * nested(&[x], n - 1, v)?)
}

/// `int rho_{n,v}(x) exp(-c x^2) dx`.
pub(crate) fn rho_gaussian_integral(n: usize, v: f64, c: f64) -> Result<f64> {
    if n == 0 || n > EXACT_MAX_N {
        return Err(Error::Budget(format!(
            "quadrature path supports 1 <= n <= {EXACT_MAX_N}, got n = {n}"
        )));
    }
    let reach = (160.0 * v).sqrt();
    let r = integrate_breaks(
        |x| rho_exact(n, v, x).unwrap_or(f64::NAN) * (-c * x * x).exp(),
        -reach,
        reach,
        &[0.0],
        1e-14,
        1e-10,
        4000,
    )?;
    if !r.value.is_finite() {
        return Err(Error::Quadrature("non-finite rho integral".into()));
    }
    Ok(r.value)
}
