use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Built-in radial density families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `w(r) = exp(-r^2 / (2 sigma^2))`, params `[sigma]`.
    Gaussian,
    /// `w(r) = (1 - (r/R)^2)^p` on `[0, R)`, params `[R]` or `[R, p]`; `p`
    /// defaults to 3, which makes `w` twice continuously differentiable.
    CompactBump,
    /// Natural cubic spline through `(r_i, w_i)`, zero beyond the last node.
    /// Params are the flattened pairs `[r_0, w_0, r_1, w_1, ...]`.
    UserTable,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Gaussian => "gaussian",
            Family::CompactBump => "compact-bump",
            Family::UserTable => "user-table",
        })
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Family::Gaussian),
            "compact-bump" => Ok(Family::CompactBump),
            "user-table" => Ok(Family::UserTable),
            other => Err(Error::InvalidDensity(format!(
                "unknown family {other:?}; expected gaussian, compact-bump or user-table"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    // second derivatives at the nodes
    m: Vec<f64>,
}

impl CubicSpline {
    pub(crate) fn natural(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            let mut upper = vec![0.0; k];
            for i in 0..k {
                let h0 = x[i + 1] - x[i];
                let h1 = x[i + 2] - x[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            for i in 1..k {
                let lower = x[i + 1] - x[i];
                let f = lower / diag[i - 1];
                diag[i] -= f * upper[i - 1];
                rhs[i] -= f * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        CubicSpline { x, y, m }
    }

    pub(crate) fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = self.x.partition_point(|&v| v <= t) - 1;
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub(crate) fn nodes(&self) -> &[f64] {
        &self.x
    }
}

/// Serializable description of a density: family plus raw parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    pub family: Family,
    pub params: Vec<f64>,
}

impl DensitySpec {
    pub fn build(&self, dim: usize) -> Result<SpectralDensity> {
        SpectralDensity::new(self.family, self.params.clone(), dim)
    }
}

/// An isotropic spectral density `w(|lambda|)` on `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    family: Family,
    params: Vec<f64>,
    dim: usize,
    spline: Option<CubicSpline>,
}

impl SpectralDensity {
    /// Validating constructor shared by the config layer and the helpers below.
    pub fn new(family: Family, params: Vec<f64>, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDensity(format!(
                "dimension must be at least 2, got {dim}"
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidDensity("parameters must be finite".into()));
        }
        let mut spline = None;
        let params = match family {
            Family::Gaussian => {
                if params.len() != 1 || params[0] <= 0.0 {
                    return Err(Error::InvalidDensity(
                        "gaussian takes one parameter sigma > 0".into(),
                    ));
                }
                params
            }
            Family::CompactBump => {
                let (r, p) = match params.as_slice() {
                    [r] => (*r, 3.0),
                    [r, p] => (*r, *p),
                    _ => {
                        return Err(Error::InvalidDensity(
                            "compact-bump takes [R] or [R, p]".into(),
                        ))
                    }
                };
                if r <= 0.0 || p < 0.0 {
                    return Err(Error::InvalidDensity(format!(
                        "compact-bump needs R > 0 and p >= 0, got R={r}, p={p}"
                    )));
                }
                vec![r, p]
            }
            Family::UserTable => {
                if params.len() < 4 || params.len() % 2 != 0 {
                    return Err(Error::InvalidDensity(
                        "user-table takes at least two (r, w) pairs, flattened".into(),
                    ));
                }
                let xs: Vec<f64> = params.iter().step_by(2).copied().collect();
                let ys: Vec<f64> = params.iter().skip(1).step_by(2).copied().collect();
                if xs[0] != 0.0 {
                    return Err(Error::InvalidDensity(
                        "user-table must start at r = 0".into(),
                    ));
                }
                if xs.windows(2).any(|p| p[1] <= p[0]) {
                    return Err(Error::InvalidDensity(
                        "user-table radii must be strictly increasing".into(),
                    ));
                }
                if ys.iter().any(|&y| y < 0.0) {
                    return Err(Error::InvalidDensity(
                        "user-table values must be non-negative".into(),
                    ));
                }
                spline = Some(CubicSpline::natural(xs, ys));
                params
            }
        };
        let d = SpectralDensity {
            family,
            params,
            dim,
            spline,
        };
        if d.is_identically_zero() {
            return Err(Error::InvalidDensity("density is identically zero".into()));
        }
        Ok(d)
    }

    pub fn gaussian(sigma: f64, dim: usize) -> Result<Self> {
        Self::new(Family::Gaussian, vec![sigma], dim)
    }

    pub fn compact_bump(radius: f64, power: f64, dim: usize) -> Result<Self> {
        Self::new(Family::CompactBump, vec![radius, power], dim)
    }

    pub fn table(radii: &[f64], values: &[f64], dim: usize) -> Result<Self> {
        if radii.len() != values.len() {
            return Err(Error::InvalidDensity(
                "radii and values differ in length".into(),
            ));
        }
        let params = radii
            .iter()
            .zip(values)
            .flat_map(|(r, w)| [*r, *w])
            .collect();
        Self::new(Family::UserTable, params, dim)
    }

    pub fn spec(&self) -> DensitySpec {
        DensitySpec {
            family: self.family,
            params: self.params.clone(),
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Same density viewed in another dimension.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        Self::new(self.family, self.params.clone(), dim)
    }

    /// `w(r)` for `r >= 0` (evaluated at `|r|` otherwise).
    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        match self.family {
            Family::Gaussian => {
                let s = self.params[0];
                (-0.5 * r * r / (s * s)).exp()
            }
            Family::CompactBump => {
                let (rad, p) = (self.params[0], self.params[1]);
                if r >= rad {
                    0.0
                } else {
                    let q = 1.0 - (r / rad).powi(2);
                    if p == 0.0 {
                        1.0
                    } else {
                        q.powf(p)
                    }
                }
            }
            Family::UserTable => {
                let sp = self.spline.as_ref().expect("table density has a spline");
                if r > *sp.nodes().last().expect("non-empty") {
                    0.0
                } else {
                    // Spline overshoot below zero is clipped to keep w >= 0.
                    sp.eval(r).max(0.0)
                }
            }
        }
    }

    /// Radius beyond which `w` vanishes, if any.
    pub fn support(&self) -> Option<f64> {
        match self.family {
            Family::Gaussian => None,
            Family::CompactBump => Some(self.params[0]),
            Family::UserTable => self.spline.as_ref().and_then(|s| s.nodes().last().copied()),
        }
    }

    /// Points where `w` is not smooth; quadrature splits there.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.family {
            Family::Gaussian => Vec::new(),
            Family::CompactBump => vec![self.params[0]],
            Family::UserTable => self
                .spline
                .as_ref()
                .map(|s| s.nodes().to_vec())
                .unwrap_or_default(),
        }
    }

    /// Natural length scale in frequency space, used to seed tail searches.
    pub fn scale(&self) -> f64 {
        match self.family {
            Family::Gaussian => self.params[0],
            _ => self.support().expect("compactly supported"),
        }
    }

    fn is_identically_zero(&self) -> bool {
        match self.family {
            Family::Gaussian | Family::CompactBump => false,
            Family::UserTable => self.params.iter().skip(1).step_by(2).all(|&y| y == 0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_interpolates_nodes_and_is_exact_on_lines() {
        let xs = vec![0.0, 0.5, 1.5, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let sp = CubicSpline::natural(xs.clone(), ys.clone());
        for (x, y) in xs.iter().zip(&ys) {
            assert!((sp.eval(*x) - y).abs() < 1e-14);
        }
        assert!((sp.eval(1.2) - 1.4).abs() < 1e-14);
    }

    #[test]
    fn spline_second_derivative_vanishes_at_ends() {
        let xs = vec![0.0, 1.0, 2.0, 3.0];
        let ys = vec![1.0, 0.5, 0.2, 0.0];
        let sp = CubicSpline::natural(xs, ys);
        assert_eq!(sp.m[0], 0.0);
        assert_eq!(sp.m[3], 0.0);
        // continuity of the second derivative across the interior nodes is
        // what the tridiagonal system enforces; check by finite differences
        let h = 1e-4;
        for &x in &[1.0, 2.0] {
            let left = (sp.eval(x - 2.0 * h) - 2.0 * sp.eval(x - h) + sp.eval(x)) / (h * h);
            let right = (sp.eval(x) - 2.0 * sp.eval(x + h) + sp.eval(x + 2.0 * h)) / (h * h);
            assert!((left - right).abs() < 1e-2, "{left} vs {right}");
        }
    }

    #[test]
    fn validation() {
        assert!(SpectralDensity::gaussian(0.0, 2).is_err());
        assert!(SpectralDensity::gaussian(1.0, 1).is_err());
        assert!(SpectralDensity::compact_bump(-1.0, 3.0, 2).is_err());
        assert!(SpectralDensity::table(&[0.0, 1.0], &[0.0, 0.0], 2).is_err());
        assert!(SpectralDensity::table(&[0.1, 1.0], &[1.0, 0.0], 2).is_err());
        assert!(SpectralDensity::table(&[0.0, 1.0], &[1.0, -0.1], 2).is_err());
        assert!("cauchy".parse::<Family>().is_err());
    }

    #[test]
    fn table_cuts_off_past_last_node() {
        let w = SpectralDensity::table(&[0.0, 1.0, 2.0], &[1.0, 0.5, 0.25], 2).unwrap();
        assert_eq!(w.eval(2.0001), 0.0);
        assert!((w.eval(1.0) - 0.5).abs() < 1e-15);
        assert_eq!(w.support(), Some(2.0));
    }

    #[test]
    fn bump_defaults_to_cubic_power() {
        let w = SpectralDensity::new(Family::CompactBump, vec![2.0], 3).unwrap();
        assert_eq!(w.params(), &[2.0, 3.0]);
        assert!((w.eval(1.0) - 0.75f64.powi(3)).abs() < 1e-15);
        assert_eq!(w.eval(2.0), 0.0);
    }
}
