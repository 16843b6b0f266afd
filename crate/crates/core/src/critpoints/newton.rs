use std::collections::HashMap;

use nalgebra::{DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{nodal_bounds, CriticalPoint, CriticalPointSet, CubeBox};
use crate::error::{Error, Result};
use crate::field::{FieldRealization, Jet};
use crate::spectrum::SpectralMoments;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Convergence threshold on `|grad X|`.
    pub tol: f64,
    pub dedup_radius: f64,
    pub degenerate_tol: f64,
    pub max_iter: usize,
    /// Abandon a start once it wanders this far (sup norm) from its cell center.
    pub max_drift: f64,
    /// Largest sup-norm step.
    pub max_step: f64,
}

impl NewtonOptions {
    /// `tol = 1e-10 sqrt(d)`, `dedup = h/2`, `degenerate = 1e-8 h_m^{m/2}`,
    /// steps of at most one cell and a drift budget of two cells.
    pub fn new(spacing: f64, d: f64, h: f64, m: usize) -> Self {
        NewtonOptions {
            tol: 1e-10 * d.sqrt(),
            dedup_radius: 0.5 * spacing,
            degenerate_tol: 1e-8 * h.powf(m as f64 / 2.0),
            max_iter: 50,
            max_drift: 2.0 * spacing,
            max_step: spacing,
        }
    }

    pub fn for_field(field: &FieldRealization, moments: &SpectralMoments) -> Self {
        Self::new(field.grid.spacing(), moments.d, moments.h, field.dim())
    }
}

enum Outcome {
    Root(Vec<f64>, Jet),
    Failed,
}

fn newton(field: &FieldRealization, start: &[f64], opts: &NewtonOptions) -> Outcome {
    let mut t = DVector::from_column_slice(start);
    let origin = t.clone();
    for _ in 0..=opts.max_iter {
        let Ok(jet) = field.evaluate(t.as_slice()) else {
            return Outcome::Failed;
        };
        if jet.gradient.norm() <= opts.tol {
            return Outcome::Root(t.as_slice().to_vec(), jet);
        }
        let Some(step) = jet.hessian.clone().lu().solve(&(-&jet.gradient)) else {
            return Outcome::Failed;
        };
        let size = step.amax();
        if !size.is_finite() {
            return Outcome::Failed;
        }
        let step = if size > opts.max_step {
            step * (opts.max_step / size)
        } else {
            step
        };
        t += step;
        if (&t - &origin).amax() > opts.max_drift {
            return Outcome::Failed;
        }
    }
    Outcome::Failed
}

struct Cell {
    corner: Vec<usize>,
    all_components_change: bool,
}

/// Newton's method on `grad X` from the center of every grid cell whose
/// corner values show a sign change in some gradient component. Roots
/// closer than `dedup_radius` are merged; only roots in the half-open box
/// are reported, sorted by location.
pub fn count_newton(
    field: &FieldRealization,
    bbox: &CubeBox,
    opts: &NewtonOptions,
) -> Result<CriticalPointSet> {
    let m = field.dim();
    if bbox.dim() != m {
        return Err(Error::InvalidArgument(format!(
            "box has dimension {}, field has {m}",
            bbox.dim()
        )));
    }
    let h = field.grid.spacing();
    let origin = field.grid.origin();
    let n = field.nodes();
    let (lo, hi) = field.domain();
    if bbox.lower.iter().any(|&a| a < lo + h) || bbox.upper.iter().any(|&b| b > hi - h) {
        return Err(Error::OutOfDomain(
            bbox.lower.iter().chain(&bbox.upper).copied().collect(),
        ));
    }
    if nodal_bounds(field, bbox) == (0.0, 0.0) {
        return Err(Error::Degenerate(
            "field is flat on the box; every point is critical".into(),
        ));
    }
    // Cell ranges per axis: one cell of slack around the box.
    let ranges: Vec<(usize, usize)> = (0..m)
        .map(|a| {
            let first = ((bbox.lower[a] - origin) / h).floor() as isize - 1;
            let last = ((bbox.upper[a] - origin) / h).ceil() as isize;
            (first.max(2) as usize, (last as usize).min(n - 4))
        })
        .collect();
    let mut cells = Vec::new();
    let mut idx = vec![0usize; m];
    let mut corner = vec![0usize; m];
    let counts: Vec<usize> = ranges.iter().map(|(a, b)| b - a).collect();
    let total: usize = counts.iter().product();
    for k in 0..total {
        let mut rem = k;
        for a in (0..m).rev() {
            idx[a] = ranges[a].0 + rem % counts[a];
            rem /= counts[a];
        }
        let mut changes = 0;
        for comp in 0..m {
            let g = &field.gradient[comp];
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            for c in 0..(1usize << m) {
                for a in 0..m {
                    corner[a] = idx[a] + ((c >> a) & 1);
                }
                let v = g[field.flat_index(&corner)];
                min = min.min(v);
                max = max.max(v);
            }
            if min <= 0.0 && max >= 0.0 {
                changes += 1;
            }
        }
        if changes > 0 {
            cells.push(Cell {
                corner: idx.clone(),
                all_components_change: changes == m,
            });
        }
    }

    let outcomes: Vec<Outcome> = cells
        .par_iter()
        .map(|cell| {
            let start: Vec<f64> = cell
                .corner
                .iter()
                .map(|&i| field.coordinate(i) + 0.5 * h)
                .collect();
            newton(field, &start, opts)
        })
        .collect();

    // Deterministic merge in cell order.
    let key = |t: &[f64]| -> Vec<i64> { t.iter().map(|x| (x / h).floor() as i64).collect() };
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut roots: Vec<(Vec<f64>, Jet)> = Vec::new();
    let neighbours = 3usize.pow(m as u32);
    let find_near = |t: &[f64],
                     roots: &[(Vec<f64>, Jet)],
                     buckets: &HashMap<Vec<i64>, Vec<usize>>,
                     radius: f64| {
        let base = key(t);
        for k in 0..neighbours {
            let mut rem = k;
            let probe: Vec<i64> = base
                .iter()
                .map(|b| {
                    let off = (rem % 3) as i64 - 1;
                    rem /= 3;
                    b + off
                })
                .collect();
            if let Some(list) = buckets.get(&probe) {
                for &r in list {
                    let d: f64 = roots[r]
                        .0
                        .iter()
                        .zip(t)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    if d <= radius {
                        return true;
                    }
                }
            }
        }
        false
    };
    for outcome in &outcomes {
        if let Outcome::Root(t, jet) = outcome {
            if !find_near(t, &roots, &buckets, opts.dedup_radius) {
                buckets.entry(key(t)).or_default().push(roots.len());
                roots.push((t.clone(), jet.clone()));
            }
        }
    }

    // Cells where every component changes sign but Newton failed and no
    // merged root is nearby: subdivide and retry before declaring failure.
    let mut failed_cells = 0;
    for (cell, outcome) in cells.iter().zip(&outcomes) {
        if !cell.all_components_change || !matches!(outcome, Outcome::Failed) {
            continue;
        }
        let lo_c: Vec<f64> = cell.corner.iter().map(|&i| field.coordinate(i)).collect();
        let intersects = (0..m).all(|a| lo_c[a] + h >= bbox.lower[a] && lo_c[a] < bbox.upper[a]);
        if !intersects {
            continue;
        }
        let center: Vec<f64> = lo_c.iter().map(|x| x + 0.5 * h).collect();
        let covered = |roots: &[(Vec<f64>, Jet)]| {
            roots
                .iter()
                .any(|(t, _)| t.iter().zip(&center).all(|(a, b)| (a - b).abs() <= 1.5 * h))
        };
        if covered(&roots) {
            continue;
        }
        let mut found = Vec::new();
        if !refine(field, &lo_c, h, 0, opts, &mut found) {
            failed_cells += 1;
        }
        for (t, jet) in found {
            if !find_near(&t, &roots, &buckets, opts.dedup_radius) {
                buckets.entry(key(&t)).or_default().push(roots.len());
                roots.push((t, jet));
            }
        }
    }

    let mut points: Vec<CriticalPoint> = roots
        .into_iter()
        .filter(|(t, _)| bbox.contains(t))
        .map(|(t, jet)| {
            let eig = SymmetricEigen::new(jet.hessian.clone());
            let signature = eig.eigenvalues.iter().filter(|&&e| e < 0.0).count();
            let det = eig.eigenvalues.iter().product();
            CriticalPoint {
                location: t,
                gradient_norm: jet.gradient.norm(),
                hessian_signature: signature,
                det_hessian: det,
            }
        })
        .collect();
    points.sort_by(|a, b| {
        a.location
            .iter()
            .zip(&b.location)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let degenerate = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.det_hessian.abs() <= opts.degenerate_tol)
        .map(|(i, _)| i)
        .collect();
    Ok(CriticalPointSet {
        newton_count: points.len(),
        points,
        bbox: bbox.clone(),
        kacrice_smoothed_count: None,
        epsilon_used: None,
        failed_cells,
        degenerate,
    })
}

const REFINE_DEPTH: u32 = 3;

/// Splits a suspicious cell in halves per axis, restarting Newton in every
/// sub-cell whose corners still show a sign change in all components.
/// Returns false if such a sub-cell survives to the finest level unresolved.
fn refine(
    field: &FieldRealization,
    lower: &[f64],
    width: f64,
    depth: u32,
    opts: &NewtonOptions,
    found: &mut Vec<(Vec<f64>, Jet)>,
) -> bool {
    let m = lower.len();
    let half = 0.5 * width;
    let mut ok = true;
    let mut sub = vec![0.0; m];
    let mut corner = vec![0.0; m];
    for c in 0..(1usize << m) {
        for a in 0..m {
            sub[a] = lower[a] + if (c >> a) & 1 == 1 { half } else { 0.0 };
        }
        let mut lo = vec![f64::INFINITY; m];
        let mut hi = vec![f64::NEG_INFINITY; m];
        for k in 0..(1usize << m) {
            for a in 0..m {
                corner[a] = sub[a] + if (k >> a) & 1 == 1 { half } else { 0.0 };
            }
            let Ok(jet) = field.evaluate(&corner) else {
                return false;
            };
            for i in 0..m {
                lo[i] = lo[i].min(jet.gradient[i]);
                hi[i] = hi[i].max(jet.gradient[i]);
            }
        }
        if !(0..m).all(|i| lo[i] <= 0.0 && hi[i] >= 0.0) {
            continue;
        }
        let start: Vec<f64> = sub.iter().map(|x| x + 0.5 * half).collect();
        let local = NewtonOptions {
            max_step: half,
            max_drift: 2.0 * half,
            ..*opts
        };
        match newton(field, &start, &local) {
            Outcome::Root(t, jet) => found.push((t, jet)),
            Outcome::Failed if depth + 1 < REFINE_DEPTH => {
                ok &= refine(field, &sub, half, depth + 1, opts, found)
            }
            Outcome::Failed => ok = false,
        }
    }
    ok
}
