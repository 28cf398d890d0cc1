//! Probability densities sampled on a uniform transverse grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cumulative_trapezoid, trapezoid, Grid};

/// How the values of a [`DensityCurve`] were normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Unit trapezoid integral over the grid (density per mm).
    Integral,
    /// Values sum to one with no pixel-width factor (per-pixel probabilities).
    /// Its CDF is the running sum, as in code that never integrates.
    Sum,
}

impl Normalization {
    pub fn as_str(&self) -> &'static str {
        match self {
            Normalization::Integral => "integral",
            Normalization::Sum => "sum",
        }
    }
}

/// How a curve was smoothed, recorded in CSV headers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SmoothingTag {
    Kde { h_mm: f64 },
    Spline,
}

/// Nonnegative density sampled on a [`Grid`].
///
/// `mass` is the factor that was divided out during normalization, so
/// `mass * values[i]` recovers the un-normalized intensity. Polarization
/// channels normalized independently keep their relative scale this way.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub z_m: f64,
    pub grid: Grid,
    pub values: Vec<f64>,
    pub mass: f64,
    pub normalization: Normalization,
    pub smoothing: Option<SmoothingTag>,
}

impl DensityCurve {
    /// Normalizes raw nonnegative intensities to unit trapezoid integral.
    pub fn from_intensity(z_m: f64, grid: Grid, raw: Vec<f64>) -> Result<Self> {
        if raw.len() != grid.len() {
            return Err(Error::Argument(format!(
                "intensity has {} samples but grid has {}",
                raw.len(),
                grid.len()
            )));
        }
        if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Data(
                "intensity must be finite and nonnegative".into(),
            ));
        }
        let mass = trapezoid(&raw, grid.spacing());
        if !(mass > 0.0) {
            return Err(Error::Degenerate("intensity integrates to zero".into()));
        }
        let values = raw.into_iter().map(|v| v / mass).collect();
        Ok(DensityCurve {
            z_m,
            grid,
            values,
            mass,
            normalization: Normalization::Integral,
            smoothing: None,
        })
    }

    /// Per-sample probabilities: values sum to one, no pixel-size factor.
    pub fn from_counts_summed(z_m: f64, grid: Grid, raw: Vec<f64>) -> Result<Self> {
        if raw.len() != grid.len() {
            return Err(Error::Argument("count/grid length mismatch".into()));
        }
        if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Data("counts must be finite and nonnegative".into()));
        }
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Degenerate("total count is zero".into()));
        }
        let values = raw.into_iter().map(|v| v / total).collect();
        Ok(DensityCurve {
            z_m,
            grid,
            values,
            mass: total,
            normalization: Normalization::Sum,
            smoothing: None,
        })
    }

    /// Evaluates a density function on the grid and normalizes it.
    pub fn from_fn(z_m: f64, grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let raw = grid.points().into_iter().map(f).collect();
        DensityCurve::from_intensity(z_m, grid, raw)
    }

    pub fn with_z(mut self, z_m: f64) -> Self {
        self.z_m = z_m;
        self
    }

    pub fn xs(&self) -> Vec<f64> {
        self.grid.points()
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.grid.spacing())
    }

    /// `mass * values`: the intensity before normalization.
    pub fn intensity(&self) -> Vec<f64> {
        self.values.iter().map(|v| v * self.mass).collect()
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Value of the piecewise-linear interpolant, 0 outside the grid.
    pub fn value_at(&self, x: f64) -> f64 {
        if !self.grid.contains(x) {
            return 0.0;
        }
        let k = self.grid.interval(x);
        let t = (x - self.grid.x(k)) / self.grid.spacing();
        self.values[k] * (1.0 - t) + self.values[k + 1] * t
    }

    /// Rejects negative or non-finite samples, which would make the CDF
    /// non-monotone.
    pub fn check_monotone_cdf(&self) -> Result<()> {
        if let Some(i) = self.values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Data(format!(
                "density at z={} m has invalid value {} at sample {i}; CDF would not be monotone",
                self.z_m, self.values[i]
            )));
        }
        Ok(())
    }

    /// CDF at each grid node.
    pub fn cdf_nodes(&self) -> Vec<f64> {
        match self.normalization {
            Normalization::Integral => cumulative_trapezoid(&self.values, self.grid.spacing()),
            Normalization::Sum => {
                let mut acc = 0.0;
                self.values
                    .iter()
                    .map(|v| {
                        acc += v;
                        acc
                    })
                    .collect()
            }
        }
    }

    /// Continuous CDF.
    ///
    /// For integral-normalized curves this is the exact integral of the
    /// piecewise-linear interpolant (piecewise quadratic). For sum-normalized
    /// curves it is the running sum, linearly interpolated between nodes.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let nodes = self.cdf_nodes();
        self.cdf_at_with(&nodes, x)
    }

    pub(crate) fn cdf_at_with(&self, nodes: &[f64], x: f64) -> f64 {
        let n = self.values.len();
        if x <= self.grid.x_min() {
            return match self.normalization {
                Normalization::Integral => 0.0,
                Normalization::Sum => nodes[0],
            };
        }
        if x >= self.grid.x_max() {
            return nodes[n - 1];
        }
        let k = self.grid.interval(x);
        let dx = self.grid.spacing();
        let tau = x - self.grid.x(k);
        match self.normalization {
            Normalization::Integral => {
                let slope = (self.values[k + 1] - self.values[k]) / dx;
                nodes[k] + self.values[k] * tau + 0.5 * slope * tau * tau
            }
            Normalization::Sum => {
                let t = tau / dx;
                nodes[k] * (1.0 - t) + nodes[k + 1] * t
            }
        }
    }

    /// Inverse CDF. Quantiles below/above the CDF range clamp to the grid ends.
    pub fn quantile(&self, q: f64) -> f64 {
        let nodes = self.cdf_nodes();
        self.quantile_with(&nodes, q)
    }

    /// Inverse CDF for many quantiles, sharing one cumulative pass.
    pub fn quantiles(&self, qs: &[f64]) -> Vec<f64> {
        let nodes = self.cdf_nodes();
        qs.iter().map(|&q| self.quantile_with(&nodes, q)).collect()
    }

    pub(crate) fn quantile_with(&self, nodes: &[f64], q: f64) -> f64 {
        let n = nodes.len();
        let lo = match self.normalization {
            Normalization::Integral => 0.0,
            Normalization::Sum => nodes[0],
        };
        if q <= lo {
            return self.grid.x_min();
        }
        if q >= nodes[n - 1] {
            return self.grid.x_max();
        }
        // first node with cdf >= q, so the answer lies in [x_{k-1}, x_k]
        let k = nodes.partition_point(|&c| c < q).clamp(1, n - 1) - 1;
        let dx = self.grid.spacing();
        let x0 = self.grid.x(k);
        let d = q - nodes[k];
        let tau = match self.normalization {
            Normalization::Integral => {
                let r0 = self.values[k];
                let s = (self.values[k + 1] - r0) / dx;
                // r0*t + s*t^2/2 = d, rationalized root
                let disc = (r0 * r0 + 2.0 * s * d).max(0.0);
                let denom = r0 + disc.sqrt();
                if denom > 0.0 {
                    2.0 * d / denom
                } else {
                    0.0
                }
            }
            Normalization::Sum => {
                let dc = nodes[k + 1] - nodes[k];
                if dc > 0.0 {
                    d / dc * dx
                } else {
                    0.0
                }
            }
        };
        (x0 + tau.clamp(0.0, dx)).min(self.grid.x_max())
    }

    /// Resamples onto another grid by the linear interpolant and renormalizes.
    pub fn resample(&self, grid: Grid) -> Result<DensityCurve> {
        let raw = grid.points().into_iter().map(|x| self.value_at(x)).collect();
        DensityCurve::from_intensity(self.z_m, grid, raw)
    }
}
