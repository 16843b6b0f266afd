//! One-dimensional quadrature: adaptive Gauss-Kronrod (7/15) and
//! Gauss-Legendre rules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the 7-point rule embedded at XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Single Gauss-Kronrod 15-point panel; returns (kronrod, |kronrod - gauss|).
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive Gauss-Kronrod integration over `[a, b]`, pre-split at `breaks`
/// (points outside the interval are ignored). Bisects the panel with the
/// largest error estimate until `error <= max(abs_tol, rel_tol * |value|)`.
pub fn integrate_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<Integral> {
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    if !(a < b) {
        return Err(Error::InvalidArgument(format!(
            "integration bounds [{a}, {b}]"
        )));
    }
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(a);
    edges.extend(cuts);
    edges.push(b);

    let mut heap = BinaryHeap::new();
    let mut value = 0.0;
    let mut error = 0.0;
    let mut evaluations = 0;
    for w in edges.windows(2) {
        let (v, e) = gk15(&f, w[0], w[1]);
        evaluations += 15;
        value += v;
        error += e;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    while error > abs_tol.max(rel_tol * value.abs()) {
        if heap.len() >= max_panels {
            return Err(Error::Quadrature(format!(
                "{max_panels} panels exhausted on [{a}, {b}], error estimate {error:e} for value {value:e}"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // Panel can no longer be split in floating point.
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        evaluations += 30;
        value += v1 + v2 - worst.value;
        error += e1 + e2 - worst.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // Re-sum to shed the drift of the running totals.
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok(Integral {
        value,
        error,
        evaluations,
    })
}

/// Adaptive Gauss-Kronrod integration over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    integrate_breaks(f, a, b, &[], abs_tol, rel_tol, 4000)
}

/// Single Gauss-Kronrod panel for a vector-valued integrand; the error is the
/// largest componentwise `|kronrod - gauss|`.
pub fn gk15_vec<const N: usize, F: Fn(f64) -> [f64; N]>(f: &F, a: f64, b: f64) -> ([f64; N], f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc.map(|v| WGK[7] * v);
    let mut gauss = fc.map(|v| WG[3] * v);
    for j in 0..7 {
        let dx = half * XGK[j];
        let lo = f(center - dx);
        let hi = f(center + dx);
        for c in 0..N {
            let s = lo[c] + hi[c];
            kronrod[c] += WGK[j] * s;
            if j % 2 == 1 {
                gauss[c] += WG[j / 2] * s;
            }
        }
    }
    let mut err = 0.0_f64;
    for c in 0..N {
        err = err.max(((kronrod[c] - gauss[c]) * half).abs());
        kronrod[c] *= half;
    }
    (kronrod, err)
}

struct VecPanel<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: f64,
}

impl<const N: usize> PartialEq for VecPanel<N> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<const N: usize> Eq for VecPanel<N> {}
impl<const N: usize> PartialOrd for VecPanel<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for VecPanel<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Vector-valued counterpart of [`integrate_breaks`]. Convergence is judged
/// on the summed panel errors against `max(abs_tol, rel_tol * max_c |value_c|)`.
pub fn integrate_breaks_vec<const N: usize, F: Fn(f64) -> [f64; N]>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<([f64; N], f64)> {
    if a == b {
        return Ok(([0.0; N], 0.0));
    }
    if !(a < b) {
        return Err(Error::InvalidArgument(format!(
            "integration bounds [{a}, {b}]"
        )));
    }
    let mut edges = vec![a];
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    edges.extend(cuts);
    edges.push(b);

    let mut heap = BinaryHeap::new();
    let mut value = [0.0; N];
    let mut error = 0.0;
    for w in edges.windows(2) {
        let (v, e) = gk15_vec(&f, w[0], w[1]);
        for c in 0..N {
            value[c] += v[c];
        }
        error += e;
        heap.push(VecPanel {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    let scale = |v: &[f64; N]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    while error > abs_tol.max(rel_tol * scale(&value)) {
        if heap.len() >= max_panels {
            return Err(Error::Quadrature(format!(
                "{max_panels} panels exhausted on [{a}, {b}], error estimate {error:e}"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15_vec(&f, worst.a, mid);
        let (v2, e2) = gk15_vec(&f, mid, worst.b);
        for c in 0..N {
            value[c] += v1[c] + v2[c] - worst.value[c];
        }
        error += e1 + e2 - worst.error;
        heap.push(VecPanel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(VecPanel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    let mut value = [0.0; N];
    let mut error = 0.0;
    for p in heap.iter() {
        for c in 0..N {
            value[c] += p.value[c];
        }
        error += p.error;
    }
    Ok((value, error))
}

/// Composite trapezoid rule with `n` intervals.
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..n {
        s += f(a + i as f64 * h);
    }
    s * h
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 {
                1.0
            } else if n == 1 {
                x
            } else {
                p1
            };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped to `[a, b]` and repeated over `panels` equal panels.
pub fn composite_gauss_legendre(
    a: f64,
    b: f64,
    panels: usize,
    order: usize,
) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let width = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * width;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(lo + 0.5 * width * (xi + 1.0));
            weights.push(0.5 * width * wi);
        }
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_integrates_polynomials_exactly() {
        let r = integrate(|x| x.powi(6) - 3.0 * x * x, -1.0, 2.0, 1e-14, 1e-14).unwrap();
        let exact = (128.0 + 1.0) / 7.0 - (8.0 + 1.0);
        assert!((r.value - exact).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_kinks_at_breaks() {
        let r = integrate_breaks(
            |x: f64| (x - 0.3).abs(),
            0.0,
            1.0,
            &[0.3],
            1e-14,
            1e-14,
            100,
        )
        .unwrap();
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-14);
    }

    #[test]
    fn gaussian_integral() {
        let r = integrate(|x: f64| (-x * x / 2.0).exp(), -12.0, 12.0, 1e-14, 1e-13).unwrap();
        assert!((r.value - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn legendre_rule_exact_to_degree_2n_minus_1() {
        for n in [1, 2, 5, 10, 21] {
            let (x, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n}");
            let deg = 2 * n - 2;
            let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((m - 2.0 / (deg as f64 + 1.0)).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn vector_integrand_matches_scalar() {
        let (v, _) = integrate_breaks_vec(
            |x: f64| [x.sin(), x.cos(), x * x],
            0.0,
            3.0,
            &[1.0],
            1e-14,
            1e-14,
            200,
        )
        .unwrap();
        assert!((v[0] - (1.0 - 3f64.cos())).abs() < 1e-13);
        assert!((v[1] - 3f64.sin()).abs() < 1e-13);
        assert!((v[2] - 9.0).abs() < 1e-13);
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        let r = integrate_breaks(
            |x: f64| x.sin() / x.max(1e-300),
            0.0,
            1e6,
            &[],
            1e-15,
            1e-15,
            5,
        );
        assert!(matches!(r, Err(Error::Quadrature(_))));
    }
}
