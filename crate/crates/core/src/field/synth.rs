use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;

use super::fft::{smooth_size, InverseFft};
use super::spline::crop_with_coefficients;
use super::{unflatten, upper_slot, FieldRealization, GridSpec, SPLINE_PAD};
use crate::error::{Error, Result};
use crate::quad::integrate_breaks;
use crate::rng::rng;
use crate::spectrum::{moment_ik, SpectralDensity};

/// Default cap on torus points (per array) for one synthesis.
pub const DEFAULT_MAX_POINTS: usize = 1 << 25;
const CUTOFF_TAIL: f64 = 1e-6;

/// Smallest radius `R` with `int_R^inf w(r) r^k dr < 1e-6 I_k(w)` for each of
/// `k = m-1, m+1, m+3`, so that the variances of `X`, `grad X` and
/// `Hess X` all lose less than that fraction.
pub fn spectral_cutoff(w: &SpectralDensity, m: usize) -> Result<f64> {
    let breaks = w.breakpoints();
    let mut radius: f64 = 0.0;
    for k in [m - 1, m + 1, m + 3] {
        let k = k as u32;
        let total = moment_ik(w, k)?;
        let head = |r: f64| -> Result<f64> {
            Ok(integrate_breaks(
                |x| w.eval(x) * x.powi(k as i32),
                0.0,
                r,
                &breaks,
                0.0,
                1e-12,
                20_000,
            )?
            .value)
        };
        let mut hi = w.support().unwrap_or(w.scale());
        while total - head(hi)? > CUTOFF_TAIL * total {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if total - head(mid)? > CUTOFF_TAIL * total {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        radius = radius.max(hi);
    }
    Ok(radius)
}

/// Precomputed state for repeated synthesis on one grid.
pub struct Synthesizer {
    grid: GridSpec,
    torus: usize,
    cutoff: f64,
    /// Per-axis angular frequency of every FFT bin.
    lambda: Vec<f64>,
    /// `sqrt(S_k)` times the phase shift to the window origin, per bin.
    amplitude: Vec<Complex64>,
    fft: InverseFft,
}

impl Synthesizer {
    pub fn new(w: &SpectralDensity, grid: GridSpec) -> Result<Self> {
        Self::with_budget(w, grid, DEFAULT_MAX_POINTS)
    }

    pub fn with_budget(w: &SpectralDensity, grid: GridSpec, max_points: usize) -> Result<Self> {
        grid.validate()?;
        let m = grid.m;
        let w = w.with_dim(m)?;
        let h = grid.spacing();
        let cutoff = spectral_cutoff(&w, m)?;
        let bound = std::f64::consts::PI / cutoff;
        if h > bound {
            return Err(Error::Nyquist {
                spacing: h,
                cutoff,
                bound,
            });
        }
        let window = grid.window_nodes();
        let target =
            ((grid.padding * 2.0 * grid.half_nodes() as f64).ceil() as usize).max(window + 2);
        let torus = smooth_size(target);
        let total = torus.checked_pow(m as u32).ok_or(Error::MemoryBudget {
            requested: usize::MAX,
            limit: max_points,
        })?;
        if total > max_points {
            return Err(Error::MemoryBudget {
                requested: total,
                limit: max_points,
            });
        }
        let side = torus as f64 * h;
        let dk = 2.0 * std::f64::consts::PI / side;
        let lambda: Vec<f64> = (0..torus)
            .map(|b| {
                let k = if b < torus / 2 {
                    b as f64
                } else {
                    b as f64 - torus as f64
                };
                k * dk
            })
            .collect();
        let cell = dk.powi(m as i32) / (2.0 * std::f64::consts::PI).powf(m as f64 / 2.0);
        let x0 = grid.origin();
        let mut amplitude = vec![Complex64::default(); total];
        let mut idx = vec![0usize; m];
        for (flat, slot) in amplitude.iter_mut().enumerate() {
            unflatten(flat, torus, &mut idx);
            if idx.iter().any(|&b| b == torus / 2) {
                continue;
            }
            let r2: f64 = idx.iter().map(|&b| lambda[b] * lambda[b]).sum();
            let r = r2.sqrt();
            if r > cutoff {
                continue;
            }
            let phase: f64 = idx.iter().map(|&b| lambda[b] * x0).sum();
            let a = (cell * w.eval(r)).sqrt();
            *slot = Complex64::from_polar(a, phase);
        }
        Ok(Synthesizer {
            grid,
            torus,
            cutoff,
            lambda,
            amplitude,
            fft: InverseFft::new(torus, m),
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Points per axis of the periodic synthesis grid.
    pub fn torus_nodes(&self) -> usize {
        self.torus
    }

    pub fn synthesize(&self, seed: u64) -> FieldRealization {
        let m = self.grid.m;
        let mut rng = rng(seed);
        let base: Vec<Complex64> = self
            .amplitude
            .iter()
            .map(|a| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                a * Complex64::new(re, im)
            })
            .collect();

        let ext = self.grid.window_nodes() + 2 * SPLINE_PAD;
        let kept = ext.pow(m as u32);
        let mut buffer = vec![Complex64::default(); base.len()];
        let mut idx = vec![0usize; m];
        let torus = self.torus;
        let lambda = &self.lambda;
        // torus index of every extended-window node (the torus is periodic)
        let wrap = |i: usize| (i + torus * (SPLINE_PAD / torus + 1) - SPLINE_PAD) % torus;
        let mut coefficients = Vec::new();

        let mut run = |factor: &dyn Fn(&[usize]) -> Complex64| -> Vec<f64> {
            for (flat, (dst, src)) in buffer.iter_mut().zip(&base).enumerate() {
                if *src == Complex64::default() {
                    *dst = Complex64::default();
                    continue;
                }
                unflatten(flat, torus, &mut idx);
                *dst = src * factor(&idx);
            }
            self.fft.process(&mut buffer);
            let mut out = vec![0.0; kept];
            let mut widx = vec![0usize; m];
            for (k, v) in out.iter_mut().enumerate() {
                unflatten(k, ext, &mut widx);
                let t = widx.iter().fold(0, |acc, &i| acc * torus + wrap(i));
                *v = buffer[t].re;
            }
            let (samples, coeffs) = crop_with_coefficients(out, ext, SPLINE_PAD, m);
            coefficients.push(coeffs);
            samples
        };

        let values = run(&|_| Complex64::new(1.0, 0.0));
        let gradient: Vec<Vec<f64>> = (0..m)
            .map(|j| run(&|b: &[usize]| Complex64::new(0.0, lambda[b[j]])))
            .collect();
        let mut hessian = vec![Vec::new(); m * (m + 1) / 2];
        for j in 0..m {
            for k in j..m {
                hessian[upper_slot(m, j, k)] =
                    run(&|b: &[usize]| Complex64::new(-lambda[b[j]] * lambda[b[k]], 0.0));
            }
        }
        drop(run);
        // `run` was called in storage order: X, gradient, Hessian upper triangle
        FieldRealization::from_parts(
            self.grid,
            seed,
            self.cutoff,
            values,
            gradient,
            hessian,
            Some(coefficients),
        )
    }
}

/// One realization of the centered stationary field with density `w` on `grid`.
pub fn synthesize(w: &SpectralDensity, grid: GridSpec, seed: u64) -> Result<FieldRealization> {
    Ok(Synthesizer::new(w, grid)?.synthesize(seed))
}
