//! Small statistics toolkit: block jackknife, bootstrap, Kolmogorov-Smirnov.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::rng;

/// Mean with a standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    /// `|mean - target| / stderr`; infinite if the stderr is zero and they differ.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }

    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        self.z_score(target) <= sigmas
    }
}

/// Per-block sums, merged into a jackknife estimate of the mean.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Block {
    pub sum: f64,
    pub count: usize,
}

/// Delete-one-block jackknife for the overall mean.
pub fn jackknife_mean(blocks: &[Block]) -> Estimate {
    let total: f64 = blocks.iter().map(|b| b.sum).sum();
    let n: usize = blocks.iter().map(|b| b.count).sum();
    let mean = total / n as f64;
    let k = blocks.len();
    if k < 2 {
        return Estimate {
            mean,
            stderr: f64::NAN,
            samples: n,
        };
    }
    let leave: Vec<f64> = blocks
        .iter()
        .map(|b| (total - b.sum) / (n - b.count) as f64)
        .collect();
    let bar = leave.iter().sum::<f64>() / k as f64;
    let var = (k - 1) as f64 / k as f64 * leave.iter().map(|x| (x - bar).powi(2)).sum::<f64>();
    Estimate {
        mean,
        stderr: var.sqrt(),
        samples: n,
    }
}

/// Sample mean with the usual `sd / sqrt(n)` standard error.
pub fn mean_estimate(xs: &[f64]) -> Estimate {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        f64::NAN
    };
    Estimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        samples: n,
    }
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Bootstrap standard error of `stat` from `resamples` resamples.
pub fn bootstrap_se<F: Fn(&[f64]) -> f64>(xs: &[f64], stat: F, resamples: usize, seed: u64) -> f64 {
    let n = xs.len();
    let mut r = rng(seed);
    let mut buf = vec![0.0; n];
    let values: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = xs[r.random_range(0..n)];
            }
            stat(&buf)
        })
        .collect();
    sample_variance(&values).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov-Smirnov test against `N(mean, variance)`.
pub fn ks_normal(xs: &[f64], mean: f64, variance: f64) -> Result<KsResult> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument(
            "KS test needs at least one sample".into(),
        ));
    }
    if !(variance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "reference variance must be positive, got {variance}"
        )));
    }
    let normal =
        Normal::new(mean, variance.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = normal.cdf(*x);
        d = d
            .max(f - i as f64 / n as f64)
            .max((i + 1) as f64 / n as f64 - f);
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_pvalue(d, n),
        n,
    })
}

/// `P(D_n >= d)`: exact (Marsaglia-Tsang-Wang) for `n <= 1000`, the
/// asymptotic Kolmogorov series with Stephens' correction above.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    if d >= 1.0 {
        return 0.0;
    }
    if n <= 1000 {
        (1.0 - mtw_cdf(n, d)).clamp(0.0, 1.0)
    } else {
        let sn = (n as f64).sqrt();
        kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)
    }
}

/// `Q(t) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2)`.
pub fn kolmogorov_q(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * t * t).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// `P(D_n < d)` by the matrix-power method of Marsaglia, Tsang and Wang (2003).
fn mtw_cdf(n: usize, d: f64) -> f64 {
    let nd = n as f64 * d;
    let k = nd.floor() as usize + 1;
    let m = 2 * k - 1;
    let h = k as f64 - nd;
    let mut a = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            if i + 1 >= j {
                a[i * m + j] = 1.0;
            }
        }
    }
    for i in 0..m {
        a[i * m] -= h.powi(i as i32 + 1);
        a[(m - 1) * m + i] -= h.powi((m - i) as i32);
    }
    a[(m - 1) * m] += if 2.0 * h - 1.0 > 0.0 {
        (2.0 * h - 1.0).powi(m as i32)
    } else {
        0.0
    };
    for i in 0..m {
        for j in 0..m {
            if i + 1 >= j {
                for g in 1..=(i + 1 - j) {
                    a[i * m + j] /= g as f64;
                }
            }
        }
    }
    // power with a separate base-2^140 exponent to avoid underflow
    let (q, mut e) = mat_pow(&a, m, n);
    let mut s = q[(k - 1) * m + k - 1];
    for i in 1..=n {
        s *= i as f64 / n as f64;
        if s < 1e-140 {
            s *= 1e140;
            e -= 140;
        }
    }
    s * 10f64.powi(e)
}

fn mat_mul(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * m];
    for i in 0..m {
        for l in 0..m {
            let x = a[i * m + l];
            if x == 0.0 {
                continue;
            }
            for j in 0..m {
                c[i * m + j] += x * b[l * m + j];
            }
        }
    }
    c
}

fn mat_pow(a: &[f64], m: usize, n: usize) -> (Vec<f64>, i32) {
    if n == 1 {
        return (a.to_vec(), 0);
    }
    let (half, e) = mat_pow(a, m, n / 2);
    let mut v = mat_mul(&half, &half, m);
    let mut e = 2 * e;
    if n % 2 == 1 {
        v = mat_mul(a, &v, m);
    }
    if v[(m / 2) * m + m / 2] > 1e140 {
        for x in v.iter_mut() {
            *x *= 1e-140;
        }
        e += 140;
    }
    (v, e)
}
