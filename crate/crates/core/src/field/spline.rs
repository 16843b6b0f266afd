//! Tensor-product quintic B-spline interpolation on a uniform grid.

// Poles of the quintic B-spline prefilter.
const POLES: [f64; 2] = [-0.430_575_347_099_973_8, -0.043_096_288_203_264_65];
const TOLERANCE: f64 = 1e-16;

fn causal_init(c: &[f64], z: f64) -> f64 {
    let n = c.len();
    let horizon = (TOLERANCE.ln() / z.abs().ln()).ceil() as usize;
    if horizon < n {
        let mut zn = z;
        let mut sum = c[0];
        for v in &c[1..horizon] {
            sum += zn * v;
            zn *= z;
        }
        sum
    } else {
        // exact mirror-symmetric initialisation
        let mut zn = z;
        let iz = 1.0 / z;
        let mut z2n = z.powi(n as i32 - 1);
        let mut sum = c[0] + z2n * c[n - 1];
        z2n *= z2n * iz;
        for v in &c[1..n - 1] {
            sum += (zn + z2n) * v;
            zn *= z;
            z2n *= iz;
        }
        sum / (1.0 - zn * zn)
    }
}

/// Converts samples on a line into B-spline coefficients in place.
pub(crate) fn prefilter_line(c: &mut [f64]) {
    let n = c.len();
    if n < 2 {
        return;
    }
    let gain: f64 = POLES.iter().map(|z| (1.0 - z) * (1.0 - 1.0 / z)).product();
    c.iter_mut().for_each(|v| *v *= gain);
    for &z in &POLES {
        c[0] = causal_init(c, z);
        for k in 1..n {
            c[k] += z * c[k - 1];
        }
        c[n - 1] = (z / (z * z - 1.0)) * (z * c[n - 2] + c[n - 1]);
        for k in (0..n - 1).rev() {
            c[k] = z * (c[k + 1] - c[k]);
        }
    }
}

/// Prefilters a row-major array of the given shape along every axis.
pub(crate) fn prefilter(data: &mut [f64], shape: &[usize]) {
    let total: usize = shape.iter().product();
    debug_assert_eq!(total, data.len());
    let mut line = Vec::new();
    for axis in 0..shape.len() {
        let n = shape[axis];
        let stride: usize = shape[axis + 1..].iter().product();
        let outer = total / (n * stride);
        line.resize(n, 0.0);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                for k in 0..n {
                    line[k] = data[base + k * stride];
                }
                prefilter_line(&mut line);
                for k in 0..n {
                    data[base + k * stride] = line[k];
                }
            }
        }
    }
}

/// Prefilters a cube of side `ext` that overhangs the window by `pad` nodes
/// on every side and returns `(window samples, window coefficients)`. The
/// overhang absorbs the boundary transient of the recursive filter.
pub(crate) fn crop_with_coefficients(
    mut ext_data: Vec<f64>,
    ext: usize,
    pad: usize,
    m: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n = ext - 2 * pad;
    let total = n.pow(m as u32);
    let crop = |data: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; m];
        for k in 0..total {
            super::unflatten(k, n, &mut idx);
            out.push(data[idx.iter().fold(0, |acc, &i| acc * ext + i + pad)]);
        }
        out
    };
    let samples = crop(&ext_data);
    prefilter(&mut ext_data, &vec![ext; m]);
    (samples, crop(&ext_data))
}

/// Centered quintic B-spline `beta^5(x)`, written with the truncated powers
/// `(3 - k - |x|)_+^5` to keep the cancellation small.
pub(crate) fn bspline5(x: f64) -> f64 {
    let x = x.abs();
    if x >= 3.0 {
        return 0.0;
    }
    let mut s = (3.0 - x).powi(5);
    if x < 2.0 {
        s -= 6.0 * (2.0 - x).powi(5);
    }
    if x < 1.0 {
        s += 15.0 * (1.0 - x).powi(5);
    }
    s / 120.0
}

/// Six nodes and weights along one axis for grid coordinate `u`.
pub(crate) fn weights(u: f64) -> (isize, [f64; 6]) {
    let base = u.floor() as isize - 2;
    let mut w = [0.0; 6];
    for (k, slot) in w.iter_mut().enumerate() {
        *slot = bspline5(u - (base + k as isize) as f64);
    }
    (base, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bspline_partition_of_unity() {
        for &u in &[0.0, 0.25, 0.5, 0.9] {
            let (_, w) = weights(u + 7.0);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
        assert!((bspline5(0.0) - 66.0 / 120.0).abs() < 1e-15);
        assert!((bspline5(1.0) - 26.0 / 120.0).abs() < 1e-15);
        assert!((bspline5(2.0) - 1.0 / 120.0).abs() < 1e-15);
    }

    #[test]
    fn prefiltered_line_reproduces_samples() {
        let samples: Vec<f64> = (0..40)
            .map(|i| (0.3 * i as f64).sin() + 0.01 * (i * i) as f64)
            .collect();
        let mut c = samples.clone();
        prefilter_line(&mut c);
        for i in 3..37 {
            let v: f64 = (i - 2..=i + 2)
                .map(|k| c[k] * bspline5(i as f64 - k as f64))
                .sum();
            assert!((v - samples[i]).abs() < 1e-12, "i={i}");
        }
    }
}
