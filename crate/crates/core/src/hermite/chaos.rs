use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{sphere_area, sphere_average};
use crate::error::{Error, Result};
use crate::quad::{gauss_legendre, integrate_breaks_vec};
use crate::randmat::{
    functional_blocks, wick_moments_printed, EnsembleParams, Functional, McOptions,
};
use crate::spectrum::{
    derivative_from_g, spectral_moments, squared_moment, CovarianceKernel, SpectralDensity,
};

/// Gram matrix of `(p-bar, q-bar)` over `S_m^v`:
/// `[[2m^2(m+2)^2, 2m(m+2)^2], [2m(m+2)^2, 6m(m+2)]] v^2`.
pub fn invariant_gram(m: usize, v: f64) -> Result<[[f64; 2]; 2]> {
    if m < 2 || !(v > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need m >= 2 and v > 0, got m = {m}, v = {v}"
        )));
    }
    let (mf, v2) = (m as f64, v * v);
    let pq = 2.0 * mf * (mf + 2.0).powi(2) * v2;
    Ok([
        [2.0 * mf * mf * (mf + 2.0).powi(2) * v2, pq],
        [pq, 6.0 * mf * (mf + 2.0) * v2],
    ])
}

/// The same matrix built from the quoted (incorrect) closed forms of
/// `E[pq]` and `E[q^2]`; for reports only.
pub fn invariant_gram_printed(m: usize, v: f64) -> [[f64; 2]; 2] {
    let w = wick_moments_printed(m, v);
    let pq = w.pq - w.p * w.q;
    [[w.p2 - w.p * w.p, pq], [pq, w.q2 - w.q * w.q]]
}

/// Second-chaos geometry of `f(A) = |det A|` over `S_m^v`:
/// `f_0 = E f`, `f_2 = x p-bar + y q-bar`, `z = -f_0 / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chaos2Geometry {
    pub m: usize,
    pub v: f64,
    pub gram: [[f64; 2]; 2],
    /// `(E[p-bar f], E[q-bar f])`.
    pub rhs: [f64; 2],
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub f0: f64,
    /// Jackknife covariance of the estimates of `(x, y, z)`.
    pub cov: [[f64; 3]; 3],
    pub samples: usize,
    pub seed: u64,
}

impl Chaos2Geometry {
    pub fn x_se(&self) -> f64 {
        self.cov[0][0].sqrt()
    }

    pub fn y_se(&self) -> f64 {
        self.cov[1][1].sqrt()
    }

    pub fn z_se(&self) -> f64 {
        self.cov[2][2].sqrt()
    }
}

/// Estimates `x, y, z` with Monte Carlo right-hand sides and the exact Gram
/// matrix. The estimators are linear in the block sums, so the jackknife
/// covariance coincides with the delta method.
pub fn chaos2_coefficients(
    m: usize,
    v: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Chaos2Geometry> {
    let gram = invariant_gram(m, v)?;
    let det = gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0];
    // cannot happen for m >= 2: det = 8 m^2 (m+2)^3 (m-1) v^4
    if !(det > 0.0) {
        return Err(Error::SingularGram(det));
    }
    let inv = [
        [gram[1][1] / det, -gram[0][1] / det],
        [-gram[1][0] / det, gram[0][0] / det],
    ];
    let params = EnsembleParams::s(m, v)?;
    let fs = [Functional::AbsDet, Functional::PAbsDet, Functional::QAbsDet];
    let blocks = functional_blocks(&params, &fs, n_samples, seed, &McOptions::default())?;
    let e = m as f64 * (m as f64 + 2.0) * v;
    // per-block sums of the linear statistics (r1, r2, x, y, z)
    let linear = |f: f64, pf: f64, qf: f64| -> [f64; 5] {
        let r1 = pf - e * f;
        let r2 = qf - e * f;
        [
            r1,
            r2,
            inv[0][0] * r1 + inv[0][1] * r2,
            inv[1][0] * r1 + inv[1][1] * r2,
            -0.5 * f,
        ]
    };
    let per: Vec<([f64; 5], usize)> = (0..blocks[0].len())
        .map(|b| {
            let s = linear(blocks[0][b].sum, blocks[1][b].sum, blocks[2][b].sum);
            (s, blocks[0][b].count)
        })
        .collect();
    let n: usize = per.iter().map(|p| p.1).sum();
    let mut total = [0.0; 5];
    for (s, _) in &per {
        for k in 0..5 {
            total[k] += s[k];
        }
    }
    let mean = total.map(|t| t / n as f64);
    let loo: Vec<[f64; 3]> = per
        .iter()
        .map(|(s, c)| {
            let d = (n - c) as f64;
            [
                (total[2] - s[2]) / d,
                (total[3] - s[3]) / d,
                (total[4] - s[4]) / d,
            ]
        })
        .collect();
    let k = loo.len() as f64;
    let bar: [f64; 3] = std::array::from_fn(|i| loo.iter().map(|l| l[i]).sum::<f64>() / k);
    let cov: [[f64; 3]; 3] = std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            (k - 1.0) / k
                * loo
                    .iter()
                    .map(|l| (l[i] - bar[i]) * (l[j] - bar[j]))
                    .sum::<f64>()
        })
    });
    Ok(Chaos2Geometry {
        m,
        v,
        gram,
        rhs: [mean[0], mean[1]],
        x: mean[2],
        y: mean[3],
        z: mean[4],
        f0: -2.0 * mean[4],
        cov,
        samples: n,
        seed,
    })
}

/// The four second-chaos functionals of the jet: `F_0 = sum H_2(U_i)`,
/// `F_1 = sum H_2(a_ii)`, `F_2 = sum_{i<j} H_2(a_ij)` and the centred
/// `F_3 = sum_{i<j} H_1(a_ii) H_1(a_jj) - m(m-1)/6` (normalised entries).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChaosTerm {
    F0,
    F1,
    F2,
    F3,
}

impl ChaosTerm {
    pub const ALL: [ChaosTerm; 4] = [ChaosTerm::F0, ChaosTerm::F1, ChaosTerm::F2, ChaosTerm::F3];

    fn index(self) -> usize {
        self as usize
    }

    /// `F = sum coef * :L_a L_b:` with `L` indexed by derivative lists.
    fn quadratic_form(self, m: usize, d: f64, h: f64) -> Vec<(f64, Vec<usize>, Vec<usize>)> {
        let mut out = Vec::new();
        match self {
            ChaosTerm::F0 => (0..m).for_each(|i| out.push((1.0 / d, vec![i], vec![i]))),
            ChaosTerm::F1 => {
                (0..m).for_each(|i| out.push((1.0 / (3.0 * h), vec![i, i], vec![i, i])))
            }
            ChaosTerm::F2 => {
                for i in 0..m {
                    for j in i + 1..m {
                        out.push((1.0 / h, vec![i, j], vec![i, j]));
                    }
                }
            }
            ChaosTerm::F3 => {
                for i in 0..m {
                    for j in i + 1..m {
                        out.push((1.0 / (3.0 * h), vec![i, i], vec![j, j]));
                    }
                }
            }
        }
        out
    }
}

/// Frequency-side representatives `G_i = sqrt(2) Psi_i(lambda) w(|lambda|)`
/// of the `F_i`, with `Psi_i` an even polynomial stored as monomials:
/// `G_0 = sqrt2/d sum M_ii`, `G_1 = sqrt2/(3h) sum M_iiii`,
/// `G_2 = sqrt2/h sum_{j<k} M_jjkk`, `G_3 = G_2 / 3`.
#[derive(Debug, Clone)]
pub struct ChaosSecondLevel {
    pub m: usize,
    pub s: f64,
    pub d: f64,
    pub h: f64,
    terms: [Vec<(Vec<u32>, f64)>; 4],
    // int w^2 r^k dr keyed by k
    radial: BTreeMap<u32, f64>,
}

impl ChaosSecondLevel {
    /// Fails with a divergence error when `w^2 r^{m+7}` is not integrable.
    pub fn new(w: &SpectralDensity, m: usize) -> Result<Self> {
        let mom = spectral_moments(w, m)?;
        let (d, h) = (mom.d, mom.h);
        let r2 = std::f64::consts::SQRT_2;
        let unit = |idx: &[usize], power: u32| {
            let mut e = vec![0u32; m];
            idx.iter().for_each(|&i| e[i] += power);
            e
        };
        let g0 = (0..m).map(|i| (unit(&[i], 2), r2 / d)).collect();
        let g1 = (0..m).map(|i| (unit(&[i], 4), r2 / (3.0 * h))).collect();
        let mut g2 = Vec::new();
        for j in 0..m {
            for k in j + 1..m {
                g2.push((unit(&[j, k], 2), r2 / h));
            }
        }
        let g3 = g2
            .iter()
            .map(|(e, c): &(Vec<u32>, f64)| (e.clone(), c / 3.0))
            .collect();
        let mut radial = BTreeMap::new();
        for deg in [4u32, 6, 8] {
            let k = m as u32 - 1 + deg;
            radial.insert(k, squared_moment(w, k)?);
        }
        Ok(ChaosSecondLevel {
            m,
            s: mom.s,
            d,
            h,
            terms: [g0, g1, g2, g3],
            radial,
        })
    }

    /// `<G_i, G_j>_{L^2(R^m)}` via sphere averages and radial integrals.
    pub fn inner(&self, a: ChaosTerm, b: ChaosTerm) -> f64 {
        let area = sphere_area(self.m);
        let mut total = 0.0;
        for (ea, ca) in &self.terms[a.index()] {
            for (eb, cb) in &self.terms[b.index()] {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                let avg = sphere_average(&e);
                if avg == 0.0 {
                    continue;
                }
                let deg: u32 = e.iter().sum();
                total += ca * cb * avg * area * self.radial[&(self.m as u32 - 1 + deg)];
            }
        }
        total
    }

    pub fn gram(&self) -> [[f64; 4]; 4] {
        std::array::from_fn(|i| {
            std::array::from_fn(|j| self.inner(ChaosTerm::ALL[i], ChaosTerm::ALL[j]))
        })
    }

    /// `d(0) = (2 pi d_m)^{-m/2}`.
    pub fn d0(&self) -> f64 {
        (2.0 * std::f64::consts::PI * self.d).powf(-(self.m as f64) / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct V2Infinity {
    pub value: f64,
    /// Delta-method error from the Monte Carlo uncertainty of `x + y` and `z`.
    pub stderr: f64,
    pub d0: f64,
    /// `||G_1 + 2/3 G_2||^2`, `<G_1 + 2/3 G_2, G_0>`, `||G_0||^2`.
    pub norms: [f64; 3],
}

/// `V_{2,inf} = d(0)^2 || 3 h (x + y) (G_1 + 2/3 G_2) + z G_0 ||^2`, with
/// `geometry` computed over `S_m^{h_m}`.
pub fn v2_infinity(w: &SpectralDensity, m: usize, geometry: &Chaos2Geometry) -> Result<V2Infinity> {
    let level = ChaosSecondLevel::new(w, m)?;
    if geometry.m != m || (geometry.v - level.h).abs() > 1e-9 * level.h {
        return Err(Error::InvalidArgument(format!(
            "geometry is for m = {}, v = {}; need m = {m}, v = h_m = {}",
            geometry.m, geometry.v, level.h
        )));
    }
    let g = level.gram();
    let a = g[1][1] + 4.0 / 3.0 * g[1][2] + 4.0 / 9.0 * g[2][2];
    let b = g[1][0] + 2.0 / 3.0 * g[2][0];
    let c = g[0][0];
    let d0 = level.d0();
    let alpha = 3.0 * level.h * (geometry.x + geometry.y);
    let z = geometry.z;
    let value = d0 * d0 * (alpha * alpha * a + 2.0 * alpha * z * b + z * z * c);
    let ds = d0 * d0 * (2.0 * alpha * a + 2.0 * z * b) * 3.0 * level.h;
    let dz = d0 * d0 * (2.0 * alpha * b + 2.0 * z * c);
    let cv = &geometry.cov;
    let var_s = cv[0][0] + cv[1][1] + 2.0 * cv[0][1];
    let cov_sz = cv[0][2] + cv[1][2];
    let var = ds * ds * var_s + 2.0 * ds * dz * cov_sz + dz * dz * cv[2][2];
    Ok(V2Infinity {
        value,
        stderr: var.max(0.0).sqrt(),
        d0,
        norms: [a, b, c],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeDomainOptions {
    /// Azimuthal trapezoid points (exact for trigonometric degree below this).
    pub azimuth_points: usize,
    /// Gauss-Legendre points in `cos(polar angle)` for `m = 3`.
    pub polar_points: usize,
    pub rel_tol: f64,
}

impl Default for TimeDomainOptions {
    fn default() -> Self {
        TimeDomainOptions {
            azimuth_points: 32,
            polar_points: 12,
            rel_tol: 1e-10,
        }
    }
}

/// `int_{R^m} E[F_i(0) F_j(u)] du` for all pairs, computed in the time
/// domain from the covariance derivatives and Wick's rule
/// `E[:L_a L_b:(0) :L_c L_d:(u)] = c_ac c_bd + c_ad c_bc`. Polar
/// coordinates, `m` in `{2, 3}`.
pub fn time_domain_gram(
    w: &SpectralDensity,
    m: usize,
    opts: &TimeDomainOptions,
) -> Result<[[f64; 4]; 4]> {
    if !(m == 2 || m == 3) {
        return Err(Error::InvalidArgument(format!(
            "time-domain pairing supports m = 2, 3, got {m}"
        )));
    }
    let mom = spectral_moments(w, m)?;
    let kernel = CovarianceKernel::new(w, m)?;
    let forms: Vec<_> = ChaosTerm::ALL
        .iter()
        .map(|t| t.quadratic_form(m, mom.d, mom.h))
        .collect();
    // jet variables: gradient then Hessian (upper triangle)
    let mut vars: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
    for i in 0..m {
        for j in i..m {
            vars.push(vec![i, j]);
        }
    }
    let slot = |l: &Vec<usize>| vars.iter().position(|v| v == l).expect("jet variable");
    let forms: Vec<Vec<(f64, usize, usize)>> = forms
        .iter()
        .map(|f| f.iter().map(|(c, a, b)| (*c, slot(a), slot(b))).collect())
        .collect();

    let mut nodes: Vec<(Vec<f64>, f64)> = Vec::new();
    let na = opts.azimuth_points.max(4);
    let dphi = 2.0 * std::f64::consts::PI / na as f64;
    if m == 2 {
        for k in 0..na {
            let phi = k as f64 * dphi;
            nodes.push((vec![phi.cos(), phi.sin()], dphi));
        }
    } else {
        let (zs, ws) = gauss_legendre(opts.polar_points.max(2));
        for (z, wz) in zs.iter().zip(&ws) {
            let rho = (1.0 - z * z).sqrt();
            for k in 0..na {
                let phi = k as f64 * dphi;
                nodes.push((vec![rho * phi.cos(), rho * phi.sin(), *z], wz * dphi));
            }
        }
    }
    let nv = vars.len();
    let integrand = |r: f64| -> [f64; 16] {
        let mut out = [0.0; 16];
        let g = match kernel.g_derivatives(r) {
            Ok(g) => g,
            Err(_) => return [f64::NAN; 16],
        };
        let mut cov = vec![0.0; nv * nv];
        for (omega, weight) in &nodes {
            let t: Vec<f64> = omega.iter().map(|x| r * x).collect();
            for a in 0..nv {
                let sign = if vars[a].len() % 2 == 1 { -1.0 } else { 1.0 };
                for c in 0..nv {
                    let idx: Vec<usize> = vars[a].iter().chain(&vars[c]).copied().collect();
                    cov[a * nv + c] = sign * derivative_from_g(&g, &t, &idx);
                }
            }
            let jac = weight * r.powi(m as i32 - 1);
            for i in 0..4 {
                for j in 0..4 {
                    let mut e = 0.0;
                    for &(k1, a, b) in &forms[i] {
                        for &(k2, c, d) in &forms[j] {
                            e += k1
                                * k2
                                * (cov[a * nv + c] * cov[b * nv + d]
                                    + cov[a * nv + d] * cov[b * nv + c]);
                        }
                    }
                    out[i * 4 + j] += jac * e;
                }
            }
        }
        out
    };
    let mut total = [0.0f64; 16];
    let (mut lo, mut hi) = (0.0, 4.0 / w.scale());
    let limit = 400.0 / w.scale();
    loop {
        let so_far = total.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let abs_tol = (0.01 * opts.rel_tol * so_far).max(1e-300);
        let (part, _) =
            integrate_breaks_vec(&integrand, lo, hi, &[], abs_tol, opts.rel_tol, 20_000)?;
        if part.iter().any(|x| !x.is_finite()) {
            return Err(Error::Quadrature(
                "time-domain integrand is not finite".into(),
            ));
        }
        let part_max = part.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for k in 0..16 {
            total[k] += part[k];
        }
        let total_max = total.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if part_max <= 1e-12 * total_max && lo > 0.0 {
            break;
        }
        if hi > limit {
            return Err(Error::Quadrature(format!(
                "time-domain integrand has not decayed by |u| = {hi}"
            )));
        }
        lo = hi;
        hi *= 1.5;
    }
    Ok(std::array::from_fn(|i| {
        std::array::from_fn(|j| total[i * 4 + j])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_values() {
        let g = invariant_gram(2, 1.0).unwrap();
        assert_eq!(g, [[128.0, 64.0], [64.0, 48.0]]);
        let p = invariant_gram_printed(2, 1.0);
        assert_eq!(p, [[128.0, 46.0], [46.0, 48.0]]);
        assert!(invariant_gram(1, 1.0).is_err());
    }
}
