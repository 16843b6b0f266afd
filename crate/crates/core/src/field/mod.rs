//! Gaussian random fields sampled with their first and second derivatives on
//! a regular grid.

mod fft;
mod spline;
mod stats;
mod synth;

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use stats::{jet_statistics, JetComponent, JetCovarianceEntry, JetCovarianceTable};
pub use synth::{spectral_cutoff, synthesize, Synthesizer, DEFAULT_MAX_POINTS};

/// Cells of grid kept outside `[-N, N]^m` so that interpolation and Newton
/// steps near the boundary stay inside the sampled window.
pub const MARGIN_CELLS: usize = 6;

/// Extra nodes sampled beyond the window when building spline coefficients;
/// the prefilter transient decays like `0.43^k`, so 40 nodes leave ~1e-15.
pub(crate) const SPLINE_PAD: usize = 40;

/// Discretisation of the cube `[-N, N]^m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub m: usize,
    pub half_width: f64,
    pub points_per_unit: usize,
    pub padding: f64,
}

impl GridSpec {
    pub fn new(m: usize, half_width: f64, points_per_unit: usize, padding: f64) -> Result<Self> {
        let g = GridSpec {
            m,
            half_width,
            points_per_unit,
            padding,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.m) {
            return Err(Error::InvalidArgument(format!(
                "grids support m = 2 or 3, got {}",
                self.m
            )));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "half width must be positive, got {}",
                self.half_width
            )));
        }
        if self.points_per_unit == 0 {
            return Err(Error::InvalidArgument(
                "points per unit must be positive".into(),
            ));
        }
        if !(self.padding >= 2.0) {
            return Err(Error::InvalidArgument(format!(
                "padding factor must be at least 2, got {}",
                self.padding
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.points_per_unit as f64
    }

    /// Nodes from the origin to `N` (rounded up to whole cells).
    pub fn half_nodes(&self) -> usize {
        (self.half_width * self.points_per_unit as f64 - 1e-9).ceil() as usize
    }

    /// Nodes per axis of the retained window, margin included.
    pub fn window_nodes(&self) -> usize {
        2 * (self.half_nodes() + MARGIN_CELLS) + 1
    }

    /// Coordinate of the first retained node on every axis.
    pub fn origin(&self) -> f64 {
        -((self.half_nodes() + MARGIN_CELLS) as f64) * self.spacing()
    }
}

/// Value, gradient and Hessian of a field at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// One sample of `X`, `grad X` and the upper triangle of `Hess X` on the
/// retained window of a grid.
#[derive(Debug, Clone)]
pub struct FieldRealization {
    pub grid: GridSpec,
    pub seed: u64,
    pub spectral_cutoff: f64,
    pub values: Vec<f64>,
    pub gradient: Vec<Vec<f64>>,
    pub hessian: Vec<Vec<f64>>,
    coefficients: OnceLock<Vec<Vec<f64>>>,
}

impl FieldRealization {
    pub(crate) fn from_parts(
        grid: GridSpec,
        seed: u64,
        spectral_cutoff: f64,
        values: Vec<f64>,
        gradient: Vec<Vec<f64>>,
        hessian: Vec<Vec<f64>>,
        coefficients: Option<Vec<Vec<f64>>>,
    ) -> Self {
        let cell = OnceLock::new();
        if let Some(c) = coefficients {
            let _ = cell.set(c);
        }
        FieldRealization {
            grid,
            seed,
            spectral_cutoff,
            values,
            gradient,
            hessian,
            coefficients: cell,
        }
    }

    /// Samples an explicit field given by its jet, for testing and for
    /// reading archived realizations.
    pub fn from_fn<F: Fn(&[f64]) -> Jet>(grid: GridSpec, f: F) -> Result<Self> {
        grid.validate()?;
        let m = grid.m;
        let ext = grid.window_nodes() + 2 * SPLINE_PAD;
        let total = ext.pow(m as u32);
        let arrays = 1 + m + m * (m + 1) / 2;
        let mut data = vec![vec![0.0; total]; arrays];
        let mut idx = vec![0usize; m];
        let mut t = vec![0.0; m];
        let start = grid.origin() - SPLINE_PAD as f64 * grid.spacing();
        for flat in 0..total {
            unflatten(flat, ext, &mut idx);
            for (x, &i) in t.iter_mut().zip(&idx) {
                *x = start + i as f64 * grid.spacing();
            }
            let jet = f(&t);
            data[0][flat] = jet.value;
            for a in 0..m {
                data[1 + a][flat] = jet.gradient[a];
                for b in a..m {
                    data[1 + m + upper_slot(m, a, b)][flat] = jet.hessian[(a, b)];
                }
            }
        }
        let (mut samples, mut coeffs): (Vec<_>, Vec<_>) = data
            .into_iter()
            .map(|d| spline::crop_with_coefficients(d, ext, SPLINE_PAD, m))
            .unzip();
        let hessian = samples.split_off(1 + m);
        let gradient = samples.split_off(1);
        let values = samples.pop().expect("value array");
        let _ = &mut coeffs;
        Ok(Self::from_parts(
            grid,
            0,
            f64::INFINITY,
            values,
            gradient,
            hessian,
            Some(coeffs),
        ))
    }

    /// Builds a realization from raw arrays, checking their sizes. Spline
    /// coefficients are then built with mirror boundaries, so off-grid
    /// evaluation within a few dozen nodes of the window edge is less
    /// accurate than for synthesized fields.
    pub fn from_arrays(
        grid: GridSpec,
        seed: u64,
        spectral_cutoff: f64,
        values: Vec<f64>,
        gradient: Vec<Vec<f64>>,
        hessian: Vec<Vec<f64>>,
    ) -> Result<Self> {
        grid.validate()?;
        let m = grid.m;
        let total = grid.window_nodes().pow(m as u32);
        let ok = values.len() == total
            && gradient.len() == m
            && hessian.len() == m * (m + 1) / 2
            && gradient.iter().chain(&hessian).all(|a| a.len() == total);
        if !ok {
            return Err(Error::InvalidArgument(
                "array sizes do not match the grid".into(),
            ));
        }
        Ok(Self::from_parts(
            grid,
            seed,
            spectral_cutoff,
            values,
            gradient,
            hessian,
            None,
        ))
    }

    pub fn dim(&self) -> usize {
        self.grid.m
    }

    /// Nodes per axis.
    pub fn nodes(&self) -> usize {
        self.grid.window_nodes()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let n = self.nodes();
        idx.iter().fold(0, |acc, &i| acc * n + i)
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        self.grid.origin() + i as f64 * self.grid.spacing()
    }

    /// Hessian array for entry `(i, j)`.
    pub fn hessian_array(&self, i: usize, j: usize) -> &[f64] {
        &self.hessian[upper_slot(self.grid.m, i, j)]
    }

    /// Jet stored at a grid node.
    pub fn node_jet(&self, idx: &[usize]) -> Jet {
        let m = self.grid.m;
        let f = self.flat_index(idx);
        let gradient = DVector::from_fn(m, |a, _| self.gradient[a][f]);
        let hessian = DMatrix::from_fn(m, m, |a, b| self.hessian[upper_slot(m, a, b)][f]);
        Jet {
            value: self.values[f],
            gradient,
            hessian,
        }
    }

    fn coefficients(&self) -> &Vec<Vec<f64>> {
        self.coefficients.get_or_init(|| {
            let shape = vec![self.nodes(); self.grid.m];
            std::iter::once(&self.values)
                .chain(&self.gradient)
                .chain(&self.hessian)
                .map(|a| {
                    let mut c = a.clone();
                    spline::prefilter(&mut c, &shape);
                    c
                })
                .collect()
        })
    }

    /// Range of coordinates where off-grid evaluation is available.
    pub fn domain(&self) -> (f64, f64) {
        let h = self.grid.spacing();
        let lo = self.grid.origin() + 2.0 * h;
        let hi = self.grid.origin() + (self.nodes() - 4) as f64 * h;
        (lo, hi)
    }

    /// Jet at an arbitrary point by quintic spline interpolation of each
    /// stored array; grid nodes return the stored values verbatim.
    pub fn evaluate(&self, t: &[f64]) -> Result<Jet> {
        let m = self.grid.m;
        if t.len() != m {
            return Err(Error::InvalidArgument(format!(
                "point has {} coordinates, expected {m}",
                t.len()
            )));
        }
        let (lo, hi) = self.domain();
        if t.iter().any(|&x| !(x >= lo && x <= hi)) {
            return Err(Error::OutOfDomain(t.to_vec()));
        }
        let h = self.grid.spacing();
        let u: Vec<f64> = t.iter().map(|&x| (x - self.grid.origin()) / h).collect();
        if u.iter().all(|v| v.fract() == 0.0) {
            let idx: Vec<usize> = u.iter().map(|&v| v as usize).collect();
            return Ok(self.node_jet(&idx));
        }
        let stencils: Vec<(isize, [f64; 6])> = u.iter().map(|&v| spline::weights(v)).collect();
        let n = self.nodes();
        let coeffs = self.coefficients();
        let mut acc = vec![0.0; coeffs.len()];
        let count = 6usize.pow(m as u32);
        for k in 0..count {
            let mut rem = k;
            let mut flat = 0usize;
            let mut weight = 1.0;
            let mut offs = [0usize; 3];
            for a in (0..m).rev() {
                offs[a] = rem % 6;
                rem /= 6;
            }
            for a in 0..m {
                let (base, w) = &stencils[a];
                let i = (*base + offs[a] as isize) as usize;
                flat = flat * n + i;
                weight *= w[offs[a]];
            }
            if weight == 0.0 {
                continue;
            }
            for (s, c) in acc.iter_mut().zip(coeffs) {
                *s += weight * c[flat];
            }
        }
        let gradient = DVector::from_fn(m, |a, _| acc[1 + a]);
        let hessian = DMatrix::from_fn(m, m, |a, b| acc[1 + m + upper_slot(m, a, b)]);
        Ok(Jet {
            value: acc[0],
            gradient,
            hessian,
        })
    }
}

/// Index of `(i, j)` in the upper-triangle row order.
pub fn upper_slot(m: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * m - i * (i + 1) / 2 + j
}

pub(crate) fn unflatten(mut flat: usize, n: usize, idx: &mut [usize]) {
    for slot in idx.iter_mut().rev() {
        *slot = flat % n;
        flat /= n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upper_slots_are_row_ordered() {
        assert_eq!(upper_slot(2, 0, 0), 0);
        assert_eq!(upper_slot(2, 0, 1), 1);
        assert_eq!(upper_slot(2, 1, 1), 2);
        let order: Vec<usize> = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
            .iter()
            .map(|&(i, j)| upper_slot(3, i, j))
            .collect();
        assert_eq!(order, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(upper_slot(3, 2, 1), 4);
    }

    #[test]
    fn window_geometry() {
        let g = GridSpec::new(2, 10.0, 8, 2.0).unwrap();
        assert_eq!(g.half_nodes(), 80);
        assert_eq!(g.window_nodes(), 2 * 86 + 1);
        assert!((g.origin() + 86.0 / 8.0).abs() < 1e-15);
        assert!(GridSpec::new(4, 1.0, 8, 2.0).is_err());
        assert!(GridSpec::new(2, 1.0, 8, 1.5).is_err());
    }
}
