//! Critical points of sampled fields: a Newton locator, the smoothed
//! Kac-Rice integral and the expected count.

mod kacrice;
mod newton;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldRealization;
use crate::spectrum::SpectralMoments;

pub use kacrice::{
    count_kacrice_smoothed, kacrice_sequence, KacRiceEstimate, KacRiceOptions, EPSILON_SEQUENCE,
};
pub use newton::{count_newton, NewtonOptions};

/// Half-open axis-aligned box `[lower, upper)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CubeBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidArgument(
                "box corners differ in dimension".into(),
            ));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidArgument(format!(
                "box lower {lower:?} exceeds upper {upper:?}"
            )));
        }
        Ok(CubeBox { lower, upper })
    }

    /// `[a, b)^m`.
    pub fn cube(a: f64, b: f64, m: usize) -> Result<Self> {
        Self::new(vec![a; m], vec![b; m])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, t: &[f64]) -> bool {
        t.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (a, b))| *x >= *a && *x < *b)
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| b - a)
            .product()
    }

    pub fn shifted(&self, by: &[f64]) -> Self {
        CubeBox {
            lower: self.lower.iter().zip(by).map(|(a, s)| a + s).collect(),
            upper: self.upper.iter().zip(by).map(|(a, s)| a + s).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    /// Euclidean norm of the interpolated gradient after refinement.
    pub gradient_norm: f64,
    /// Number of negative Hessian eigenvalues (0 = minimum, m = maximum).
    pub hessian_signature: usize,
    pub det_hessian: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointSet {
    pub points: Vec<CriticalPoint>,
    pub bbox: CubeBox,
    pub newton_count: usize,
    pub kacrice_smoothed_count: Option<f64>,
    pub epsilon_used: Option<f64>,
    /// Cells where every gradient component changes sign but no root was
    /// found; when non-zero the count is a lower bound.
    pub failed_cells: usize,
    /// Indices into `points` with `|det| <= degenerate_tol`.
    pub degenerate: Vec<usize>,
}

impl CriticalPointSet {
    pub fn is_lower_bound(&self) -> bool {
        self.failed_cells > 0
    }

    /// Counts by Hessian signature, index `k` = points with `k` negative eigenvalues.
    pub fn signature_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.bbox.dim() + 1];
        for p in &self.points {
            c[p.hessian_signature] += 1;
        }
        c
    }
}

/// Largest nodal `|Hess X|_inf` (max absolute row sum) and `|grad X|_inf`
/// over the nodes covering the box plus one cell.
pub(crate) fn nodal_bounds(field: &FieldRealization, bbox: &CubeBox) -> (f64, f64) {
    let m = field.dim();
    let h = field.grid.spacing();
    let origin = field.grid.origin();
    let n = field.nodes();
    let ranges: Vec<(usize, usize)> = (0..m)
        .map(|a| {
            let first = (((bbox.lower[a] - origin) / h).floor() as isize - 1).max(0) as usize;
            let last =
                ((((bbox.upper[a] - origin) / h).ceil() as isize + 1).max(0) as usize).min(n - 1);
            (first, last.max(first))
        })
        .collect();
    let counts: Vec<usize> = ranges.iter().map(|(a, b)| b - a + 1).collect();
    let total: usize = counts.iter().product();
    let mut idx = vec![0usize; m];
    let (mut hess, mut grad) = (0.0f64, 0.0f64);
    for k in 0..total {
        let mut rem = k;
        for a in (0..m).rev() {
            idx[a] = ranges[a].0 + rem % counts[a];
            rem /= counts[a];
        }
        let flat = field.flat_index(&idx);
        for i in 0..m {
            grad = grad.max(field.gradient[i][flat].abs());
            let row: f64 = (0..m).map(|j| field.hessian_array(i, j)[flat].abs()).sum();
            hess = hess.max(row);
        }
    }
    (hess, grad)
}

/// `E[Z(S)] = (h / (2 pi d))^{m/2} E_{S_m^1}|det A| vol(S)`.
pub fn expected_count(
    moments: &SpectralMoments,
    m: usize,
    box_volume: f64,
    e_absdet_s1: f64,
) -> f64 {
    expected_density(moments, m, e_absdet_s1) * box_volume
}

/// `C_m(w) = (h / (2 pi d))^{m/2} E_{S_m^1}|det A|`.
pub fn expected_density(moments: &SpectralMoments, m: usize, e_absdet_s1: f64) -> f64 {
    (moments.h / (2.0 * std::f64::consts::PI * moments.d)).powf(m as f64 / 2.0) * e_absdet_s1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_open_box() {
        let b = CubeBox::cube(-1.0, 1.0, 2).unwrap();
        assert!(b.contains(&[-1.0, 0.999]));
        assert!(!b.contains(&[1.0, 0.0]));
        assert_eq!(b.volume(), 4.0);
        assert!(CubeBox::cube(1.0, -1.0, 2).is_err());
    }

    #[test]
    fn expected_count_scales() {
        let mo = SpectralMoments::from_sdh(2, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(expected_count(&mo, 2, 0.0, 3.0), 0.0);
        let a = expected_count(&mo, 2, 400.0, 3.0);
        assert!((a - 400.0 * 3.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-12);
        let mo2 = SpectralMoments::from_sdh(2, 1.0, 1.0, 2.0).unwrap();
        assert!((expected_count(&mo2, 2, 400.0, 3.0) - 2.0 * a).abs() < 1e-12);
    }
}
