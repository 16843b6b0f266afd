//! Scaled Bessel functions `x^{-nu} J_nu(x)` for integer and half-integer
//! orders, as needed by radial Fourier transforms in any dimension.

use statrs::function::gamma::gamma;

const SERIES_LIMIT: f64 = 2.0;

/// `x^{-nu} J_nu(x)` with `nu = twice_nu / 2`. Continuous at zero, where it
/// equals `1 / (2^nu Gamma(nu + 1))`.
pub fn scaled_j(twice_nu: u32, x: f64) -> f64 {
    let nu = twice_nu as f64 / 2.0;
    let x = x.abs();
    if x < SERIES_LIMIT {
        return series(nu, x);
    }
    let order = (twice_nu / 2) as usize;
    let j = if twice_nu % 2 == 0 {
        integer_orders(order, x)
    } else {
        half_integer_orders(order, x)
    };
    j / x.powf(nu)
}

/// `x^{-nu} J_nu(x)` for all `nu = nu0 + j`, `j = 0..count`, sharing one recurrence.
pub fn scaled_j_ladder(twice_nu0: u32, count: usize, x: f64) -> Vec<f64> {
    let x = x.abs();
    let nu0 = twice_nu0 as f64 / 2.0;
    if x < SERIES_LIMIT {
        return (0..count).map(|j| series(nu0 + j as f64, x)).collect();
    }
    let base = (twice_nu0 / 2) as usize;
    let all = if twice_nu0 % 2 == 0 {
        integer_ladder(base + count, x)
    } else {
        half_integer_ladder(base + count, x)
    };
    (0..count)
        .map(|j| {
            let nu = nu0 + j as f64;
            all[base + j] / x.powf(nu)
        })
        .collect()
}

fn series(nu: f64, x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0 / (2f64.powf(nu) * gamma(nu + 1.0));
    let mut sum = term;
    for k in 1..200 {
        let kf = k as f64;
        term *= q / (kf * (nu + kf));
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn start_order(nmax: usize, x: f64) -> usize {
    let n = nmax.max(x as usize) + (10.0 * x.cbrt()) as usize + 30;
    n + (n % 2)
}

fn integer_orders(n: usize, x: f64) -> f64 {
    integer_ladder(n + 1, x)[n]
}

/// `J_0..J_{count-1}` by Miller's backward recurrence, normalised with
/// `J_0 + 2 sum J_{2k} = 1`.
fn integer_ladder(count: usize, x: f64) -> Vec<f64> {
    let start = start_order(count, x);
    let mut out = vec![0.0; count];
    let (mut jp1, mut j) = (0.0_f64, 1e-300_f64);
    let mut norm = 0.0;
    for k in (0..=start).rev() {
        if k < count {
            out[k] = j;
        }
        if k % 2 == 0 {
            norm += if k == 0 { j } else { 2.0 * j };
        }
        if k == 0 {
            break;
        }
        let jm1 = 2.0 * k as f64 / x * j - jp1;
        jp1 = j;
        j = jm1;
        if j.abs() > 1e250 {
            let s = 1e-250;
            j *= s;
            jp1 *= s;
            norm *= s;
            out.iter_mut().for_each(|v| *v *= s);
        }
    }
    out.iter().map(|v| v / norm).collect()
}

fn half_integer_orders(n: usize, x: f64) -> f64 {
    half_integer_ladder(n + 1, x)[n]
}

/// `J_{1/2}..J_{count-1/2}` through the spherical functions `j_n`, normalised
/// against whichever of the closed forms `j_0`, `j_1` is larger.
fn half_integer_ladder(count: usize, x: f64) -> Vec<f64> {
    let need = count.max(2);
    let start = start_order(need, x);
    let mut sph = vec![0.0; need];
    let (mut jp1, mut j) = (0.0_f64, 1e-300_f64);
    for n in (0..=start).rev() {
        if n < need {
            sph[n] = j;
        }
        if n == 0 {
            break;
        }
        let jm1 = (2 * n + 1) as f64 / x * j - jp1;
        jp1 = j;
        j = jm1;
        if j.abs() > 1e250 {
            let s = 1e-250;
            j *= s;
            jp1 *= s;
            sph.iter_mut().for_each(|v| *v *= s);
        }
    }
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    let j1 = s / (x * x) - c / x;
    let scale = if j0.abs() >= j1.abs() {
        j0 / sph[0]
    } else {
        j1 / sph[1]
    };
    let to_cyl = (2.0 * x / std::f64::consts::PI).sqrt();
    sph.iter().take(count).map(|v| v * scale * to_cyl).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values of J_nu(x) from standard tables.
    #[test]
    fn integer_order_table() {
        let cases = [
            (0, 1.0, 0.765_197_686_557_966_6),
            (0, 10.0, -0.245_935_764_451_348_3),
            (1, 10.0, 0.043_472_746_168_861_44),
            (2, 5.0, 0.046_565_116_277_752_2),
            (3, 30.0, 0.129_211_228_759_725),
            (0, 100.0, 0.019_985_850_304_223_12),
        ];
        for (n, x, want) in cases {
            let got = scaled_j(2 * n, x) * x.powi(n as i32);
            assert!(
                (got - want).abs() < 1e-13,
                "J_{n}({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn half_integer_orders_match_closed_forms() {
        for &x in &[0.3, 2.0, 4.5, 7.0, 31.4, 200.0] {
            let (s, c) = f64::sin_cos(x);
            let pre = (2.0 / (std::f64::consts::PI * x)).sqrt();
            let j_half = pre * s;
            let j_3half = pre * (s / x - c);
            let j_5half = pre * ((3.0 / (x * x) - 1.0) * s - 3.0 * c / x);
            let got = scaled_j_ladder(1, 3, x);
            for (k, want) in [j_half, j_3half, j_5half].iter().enumerate() {
                let g = got[k] * x.powf(0.5 + k as f64);
                assert!((g - want).abs() < 1e-12, "x={x} k={k} got={g} want={want}");
            }
        }
    }

    #[test]
    fn value_at_origin() {
        // 1 / (2^nu Gamma(nu+1)) for nu = 0, 1/2, 1, 2.
        let want = [1.0, (2.0 / std::f64::consts::PI).sqrt(), 0.5, 0.125];
        for (t, w) in [0u32, 1, 2, 4].iter().zip(want) {
            assert!(
                (scaled_j(*t, 0.0) - w).abs() < 1e-14,
                "t={t}: {}",
                scaled_j(*t, 0.0)
            );
        }
    }

    #[test]
    fn series_and_recurrence_agree_at_switch() {
        for t in 0..10 {
            let x = SERIES_LIMIT;
            let a = series(t as f64 / 2.0, x);
            let order = (t / 2) as usize;
            let b = if t % 2 == 0 {
                integer_orders(order, x)
            } else {
                half_integer_orders(order, x)
            } / x.powf(t as f64 / 2.0);
            assert!(
                (a - b).abs() < 1e-12 * a.abs().max(1e-3),
                "t={t}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn ladder_matches_single_calls() {
        for &x in &[0.5, 5.0, 17.0] {
            let l = scaled_j_ladder(2, 4, x);
            for (j, v) in l.iter().enumerate() {
                let s = scaled_j(2 + 2 * j as u32, x);
                assert!((v - s).abs() < 1e-14 * s.abs().max(1e-10));
            }
        }
    }
}
