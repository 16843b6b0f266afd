use serde::{Deserialize, Serialize};

use super::{unflatten, upper_slot, FieldRealization, MARGIN_CELLS};
use crate::error::{Error, Result};
use crate::spectrum::SpectralMoments;

/// One coordinate of the second jet `(X, grad X, Hess X)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JetComponent {
    Value,
    Gradient(usize),
    Hessian(usize, usize),
}

impl JetComponent {
    pub fn all(m: usize) -> Vec<JetComponent> {
        let mut v = vec![JetComponent::Value];
        v.extend((0..m).map(JetComponent::Gradient));
        for i in 0..m {
            for j in i..m {
                v.push(JetComponent::Hessian(i, j));
            }
        }
        v
    }

    fn array<'a>(&self, f: &'a FieldRealization) -> &'a [f64] {
        match *self {
            JetComponent::Value => &f.values,
            JetComponent::Gradient(i) => &f.gradient[i],
            JetComponent::Hessian(i, j) => &f.hessian[upper_slot(f.grid.m, i, j)],
        }
    }

    /// `E[a b]` at a single point for a field with moments `(s, d, h)`.
    pub fn analytic_moment(a: JetComponent, b: JetComponent, mo: &SpectralMoments) -> f64 {
        use JetComponent::*;
        let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
        match (a, b) {
            (Value, Value) => mo.s,
            (Value, Gradient(_)) | (Gradient(_), Value) => 0.0,
            (Value, Hessian(i, j)) | (Hessian(i, j), Value) => -mo.d * delta(i, j),
            (Gradient(i), Gradient(j)) => mo.d * delta(i, j),
            (Gradient(_), Hessian(..)) | (Hessian(..), Gradient(_)) => 0.0,
            (Hessian(i, j), Hessian(k, l)) => {
                mo.h * (delta(i, j) * delta(k, l)
                    + delta(i, k) * delta(j, l)
                    + delta(i, l) * delta(j, k))
            }
        }
    }
}

impl std::fmt::Display for JetComponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            JetComponent::Value => write!(f, "X"),
            JetComponent::Gradient(i) => write!(f, "d{}X", i + 1),
            JetComponent::Hessian(i, j) => write!(f, "d{}{}X", i + 1, j + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JetCovarianceEntry {
    pub a: JetComponent,
    pub b: JetComponent,
    pub estimate: f64,
    pub stderr: f64,
    pub target: Option<f64>,
}

impl JetCovarianceEntry {
    /// `|estimate - target| / stderr`, if a target is attached.
    pub fn z_score(&self) -> Option<f64> {
        self.target.map(|t| {
            let d = self.estimate - t;
            if self.stderr > 0.0 {
                d.abs() / self.stderr
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JetCovarianceTable {
    pub realizations: usize,
    pub points_per_realization: usize,
    pub entries: Vec<JetCovarianceEntry>,
}

impl JetCovarianceTable {
    pub fn get(&self, a: JetComponent, b: JetComponent) -> Option<&JetCovarianceEntry> {
        self.entries
            .iter()
            .find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
    }

    /// Attaches the analytic second moments as targets.
    pub fn with_targets(mut self, mo: &SpectralMoments) -> Self {
        for e in &mut self.entries {
            e.target = Some(JetComponent::analytic_moment(e.a, e.b, mo));
        }
        self
    }
}

/// Pooled second moments of the jet at grid nodes one unit apart inside
/// `[-N, N]^m`. Each realization contributes its spatial average as one
/// observation; standard errors come from the spread across realizations.
pub fn jet_statistics(fields: &[FieldRealization]) -> Result<JetCovarianceTable> {
    if fields.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 realizations, got {}",
            fields.len()
        )));
    }
    let grid = fields[0].grid;
    if fields.iter().any(|f| f.grid != grid) {
        return Err(Error::InvalidArgument(
            "realizations are on different grids".into(),
        ));
    }
    let m = grid.m;
    let stride = grid.points_per_unit;
    let inner = 2 * grid.half_nodes() + 1;
    let per_axis: Vec<usize> = (0..inner)
        .step_by(stride)
        .map(|i| i + MARGIN_CELLS)
        .collect();
    let count = per_axis.len().pow(m as u32);
    let n = grid.window_nodes();
    let mut sample_points = Vec::with_capacity(count);
    let mut idx = vec![0usize; m];
    for k in 0..count {
        unflatten(k, per_axis.len(), &mut idx);
        sample_points.push(idx.iter().fold(0, |acc, &i| acc * n + per_axis[i]));
    }

    let comps = JetComponent::all(m);
    let mut entries = Vec::new();
    for (ia, &a) in comps.iter().enumerate() {
        for &b in &comps[ia..] {
            let obs: Vec<f64> = fields
                .iter()
                .map(|f| {
                    let (xa, xb) = (a.array(f), b.array(f));
                    sample_points.iter().map(|&p| xa[p] * xb[p]).sum::<f64>() / count as f64
                })
                .collect();
            let r = obs.len() as f64;
            let mean = obs.iter().sum::<f64>() / r;
            let var = obs.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / (r - 1.0);
            entries.push(JetCovarianceEntry {
                a,
                b,
                estimate: mean,
                stderr: (var / r).sqrt(),
                target: None,
            });
        }
    }
    Ok(JetCovarianceTable {
        realizations: fields.len(),
        points_per_realization: count,
        entries,
    })
}
