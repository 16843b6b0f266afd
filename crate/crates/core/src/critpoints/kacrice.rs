use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{nodal_bounds, CubeBox};
use crate::error::{Error, Result};
use crate::field::FieldRealization;

/// `eps_k = 0.2 * 2^-k`, `k = 0..4`.
pub const EPSILON_SEQUENCE: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.0125];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KacRiceOptions {
    /// Cells straddling the indicator boundary are bisected until their side
    /// is below `eps / L` (`L` a bound on `|Hess X|_inf`), then integrated on a
    /// `linear_samples^m` lattice of the local linear model of `grad X`.
    pub linear_samples: usize,
    /// Safety factor applied to the largest nodal Hessian norm.
    pub lipschitz_safety: f64,
    /// Warn when the indicator region `eps / L` is thinner than `spacing / resolution`.
    pub resolution: f64,
    pub max_depth: u32,
}

impl Default for KacRiceOptions {
    fn default() -> Self {
        KacRiceOptions {
            linear_samples: 16,
            lipschitz_safety: 1.5,
            resolution: 256.0,
            max_depth: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KacRiceEstimate {
    pub value: f64,
    pub epsilon: f64,
    pub warning: Option<String>,
}

struct Ctx<'a> {
    field: &'a FieldRealization,
    eps: f64,
    lipschitz: f64,
    min_leaf: f64,
    samples: usize,
    max_depth: u32,
}

impl Ctx<'_> {
    /// Integral of `1{|grad X|_inf <= eps} |det Hess X|` over the cell.
    fn cell(&self, lower: &[f64], width: &[f64], depth: u32) -> Result<f64> {
        let m = lower.len();
        let center: Vec<f64> = lower.iter().zip(width).map(|(a, w)| a + 0.5 * w).collect();
        let jet = self.field.evaluate(&center)?;
        let g = jet.gradient.amax();
        let reach = self.lipschitz * 0.5 * width.iter().fold(0.0f64, |a, &b| a.max(b));
        if g - reach > self.eps {
            return Ok(0.0);
        }
        let vol: f64 = width.iter().product();
        let widest = width.iter().fold(0.0f64, |a, &b| a.max(b));
        let det = jet.hessian.determinant().abs();
        if g + reach <= self.eps {
            return Ok(det * vol);
        }
        if widest <= self.min_leaf || depth >= self.max_depth {
            return Ok(det * vol * self.linear_fraction(&jet, width));
        }
        let half: Vec<f64> = width.iter().map(|w| 0.5 * w).collect();
        let mut total = 0.0;
        let mut sub = vec![0.0; m];
        for c in 0..(1usize << m) {
            for a in 0..m {
                sub[a] = lower[a] + if (c >> a) & 1 == 1 { half[a] } else { 0.0 };
            }
            total += self.cell(&sub, &half, depth + 1)?;
        }
        Ok(total)
    }

    /// Fraction of the cell where `|g(c) + H(c)(t - c)|_inf <= eps`.
    fn linear_fraction(&self, jet: &crate::field::Jet, width: &[f64]) -> f64 {
        let m = width.len();
        let k = self.samples;
        let total = k.pow(m as u32);
        let mut inside = 0usize;
        let mut off = vec![0.0; m];
        for flat in 0..total {
            let mut rem = flat;
            for a in 0..m {
                off[a] = ((rem % k) as f64 + 0.5) / k as f64 - 0.5;
                off[a] *= width[a];
                rem /= k;
            }
            let ok = (0..m).all(|i| {
                let gi =
                    jet.gradient[i] + (0..m).map(|j| jet.hessian[(i, j)] * off[j]).sum::<f64>();
                gi.abs() <= self.eps
            });
            inside += ok as usize;
        }
        inside as f64 / total as f64
    }
}

/// `int_box (2 eps)^-m 1{|grad X|_inf <= eps} |det Hess X| dt`, integrated
/// adaptively: grid-sized cells are pruned with a Lipschitz bound on the
/// gradient, cells straddling the indicator boundary are bisected down to
/// a size proportional to `eps` and finished with the local linear model.
pub fn count_kacrice_smoothed(
    field: &FieldRealization,
    bbox: &CubeBox,
    eps: f64,
    opts: &KacRiceOptions,
) -> Result<KacRiceEstimate> {
    let m = field.dim();
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {eps}"
        )));
    }
    if bbox.dim() != m {
        return Err(Error::InvalidArgument(format!(
            "box has dimension {}, field has {m}",
            bbox.dim()
        )));
    }
    let (lo, hi) = field.domain();
    if bbox.lower.iter().any(|&a| a < lo) || bbox.upper.iter().any(|&b| b > hi) {
        return Err(Error::OutOfDomain(
            bbox.lower.iter().chain(&bbox.upper).copied().collect(),
        ));
    }
    let h = field.grid.spacing();
    let (hess_max, grad_max) = nodal_bounds(field, bbox);
    if hess_max == 0.0 && grad_max == 0.0 {
        return Err(Error::Degenerate(
            "field is flat on the box; every point is critical".into(),
        ));
    }
    let lipschitz = opts.lipschitz_safety * hess_max;
    let min_leaf = if lipschitz > 0.0 { eps / lipschitz } else { h };
    let warning = (lipschitz > 0.0 && eps / lipschitz < h / opts.resolution).then(|| {
        format!(
            "epsilon {eps} gives an indicator width {:.3e} below spacing/{} = {:.3e}",
            eps / lipschitz,
            opts.resolution,
            h / opts.resolution
        )
    });

    let cells_per_axis: Vec<usize> = (0..m)
        .map(|a| (((bbox.upper[a] - bbox.lower[a]) / h).ceil() as usize).max(1))
        .collect();
    let width: Vec<f64> = (0..m)
        .map(|a| (bbox.upper[a] - bbox.lower[a]) / cells_per_axis[a] as f64)
        .collect();
    let total: usize = cells_per_axis.iter().product();
    let ctx = Ctx {
        field,
        eps,
        lipschitz,
        min_leaf,
        samples: opts.linear_samples.max(1),
        max_depth: opts.max_depth,
    };
    let parts: Vec<Result<f64>> = (0..total)
        .into_par_iter()
        .map(|k| {
            let mut rem = k;
            let mut lower = vec![0.0; m];
            for a in (0..m).rev() {
                lower[a] = bbox.lower[a] + (rem % cells_per_axis[a]) as f64 * width[a];
                rem /= cells_per_axis[a];
            }
            ctx.cell(&lower, &width, 0)
        })
        .collect();
    let mut sum = 0.0;
    for p in parts {
        sum += p?;
    }
    Ok(KacRiceEstimate {
        value: sum / (2.0 * eps).powi(m as i32),
        epsilon: eps,
        warning,
    })
}

/// The smoothed count at every `eps` in `EPSILON_SEQUENCE`, coarse to fine.
pub fn kacrice_sequence(
    field: &FieldRealization,
    bbox: &CubeBox,
    opts: &KacRiceOptions,
) -> Result<Vec<KacRiceEstimate>> {
    EPSILON_SEQUENCE
        .iter()
        .map(|&eps| count_kacrice_smoothed(field, bbox, eps, opts))
        .collect()
}
