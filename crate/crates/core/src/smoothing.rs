//! Continuous intensity curves from binned pixel counts.
//!
//! Two fits are offered. [`spline_fit`] interpolates the counts with a
//! natural cubic spline, so every fluctuation of the data survives into the
//! curve. [`kde_estimate`] treats each pixel centre as a sample weighted by
//! its count and sums Gaussian kernels with a Silverman bandwidth.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{DensityCurve, SmoothingTag};
use crate::error::{Error, Result};
use crate::grid::{trapezoid, Grid};
use crate::interp::NaturalSpline;

/// How weights enter the effective sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// Weights are multiplicities (photon counts): `n = Σw`.
    Frequency,
    /// Weights are relative reliabilities: `n = (Σw)² / Σw²`.
    Reliability,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSamples {
    positions: Vec<f64>,
    weights: Vec<f64>,
    kind: WeightKind,
}

impl WeightedSamples {
    pub fn new(positions: Vec<f64>, weights: Vec<f64>, kind: WeightKind) -> Result<Self> {
        if positions.len() != weights.len() || positions.is_empty() {
            return Err(Error::Argument(
                "samples need equal, nonzero numbers of positions and weights".into(),
            ));
        }
        if positions.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("sample positions must be strictly increasing".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Argument("weights must be finite and nonnegative".into()));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::Degenerate("total sample weight is zero".into()));
        }
        Ok(WeightedSamples {
            positions,
            weights,
            kind,
        })
    }

    /// Pixel centres weighted by their counts.
    pub fn from_counts(positions: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        WeightedSamples::new(positions, counts, WeightKind::Frequency)
    }

    /// Rebuilds counts from a normalized curve: `weights = mass * values`.
    pub fn from_density(curve: &DensityCurve) -> Result<Self> {
        WeightedSamples::from_counts(curve.xs(), curve.intensity())
    }

    /// Unit weights.
    pub fn unweighted(mut positions: Vec<f64>) -> Result<Self> {
        positions.sort_by(f64::total_cmp);
        let n = positions.len();
        WeightedSamples::new(positions, vec![1.0; n], WeightKind::Frequency)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn effective_size(&self) -> f64 {
        let w = self.total_weight();
        match self.kind {
            WeightKind::Frequency => w,
            WeightKind::Reliability => w * w / self.weights.iter().map(|x| x * x).sum::<f64>(),
        }
    }

    pub fn mean(&self) -> f64 {
        let w = self.total_weight();
        self.positions
            .iter()
            .zip(&self.weights)
            .map(|(x, wi)| x * wi)
            .sum::<f64>()
            / w
    }

    /// Weighted standard deviation with the unbiased denominator for the
    /// weight kind (`Σw - 1` or `Σw - Σw²/Σw`).
    pub fn std_dev(&self) -> f64 {
        let w = self.total_weight();
        let mu = self.mean();
        let ss: f64 = self
            .positions
            .iter()
            .zip(&self.weights)
            .map(|(x, wi)| wi * (x - mu) * (x - mu))
            .sum();
        let denom = match self.kind {
            WeightKind::Frequency => w - 1.0,
            WeightKind::Reliability => w - self.weights.iter().map(|x| x * x).sum::<f64>() / w,
        };
        if denom > 0.0 {
            (ss / denom).sqrt()
        } else {
            0.0
        }
    }
}

/// Kernel width in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h.is_finite() {
            Ok(Bandwidth(h))
        } else {
            Err(Error::Argument(format!("bandwidth must be > 0 (got {h})")))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    /// Raises the bandwidth to at least `floor`.
    pub fn at_least(self, floor: f64) -> Bandwidth {
        Bandwidth(self.0.max(floor))
    }
}

/// Silverman's rule of thumb `h = 1.06 σ̂ n^(-1/5)`.
pub fn silverman_bandwidth(samples: &WeightedSamples) -> Result<Bandwidth> {
    let n = samples.effective_size();
    if !(n > 1.0) {
        return Err(Error::Degenerate(format!(
            "effective sample size {n} is too small for a bandwidth"
        )));
    }
    let sigma = samples.std_dev();
    if !(sigma > 0.0) {
        return Err(Error::Degenerate(
            "all sample weight sits at one position".into(),
        ));
    }
    Bandwidth::new(1.06 * sigma * n.powf(-0.2))
}

/// Standard normal kernel.
#[inline]
pub fn gaussian_kernel(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

/// Beyond this many bandwidths the kernel underflows to exactly zero.
const KERNEL_REACH: f64 = 39.0;

/// Raw estimator `(1/(W h)) Σ w_i K((x - x_i)/h)` at one point.
pub fn kde_value(samples: &WeightedSamples, h: Bandwidth, x: f64) -> f64 {
    let h = h.value();
    let p = &samples.positions;
    // samples whose kernel is not an exact zero
    let lo = p.partition_point(|&xi| xi < x - KERNEL_REACH * h);
    let hi = p.partition_point(|&xi| xi <= x + KERNEL_REACH * h);
    let s: f64 = p[lo..hi]
        .iter()
        .zip(&samples.weights[lo..hi])
        .map(|(xi, wi)| wi * gaussian_kernel((x - xi) / h))
        .sum();
    s / (samples.total_weight() * h)
}

/// Gaussian KDE on `eval_grid`, renormalized to unit integral there.
///
/// The curve's `mass` is `W * ∫ raw estimate`, so `mass * values` is the
/// estimate of the count density `W * I_est(x)`.
pub fn kde_estimate(samples: &WeightedSamples, h: Bandwidth, eval_grid: Grid) -> Result<DensityCurve> {
    let raw: Vec<f64> = eval_grid
        .points()
        .par_iter()
        .map(|&x| kde_value(samples, h, x))
        .collect();
    let integral = trapezoid(&raw, eval_grid.spacing());
    let mut curve = DensityCurve::from_intensity(0.0, eval_grid, raw)?;
    curve.mass = samples.total_weight() * integral;
    curve.smoothing = Some(SmoothingTag::Kde { h_mm: h.value() });
    Ok(curve)
}

/// Natural cubic spline through `(position, weight)`, clamped at zero and
/// renormalized on `eval_grid`.
pub fn spline_fit(samples: &WeightedSamples, eval_grid: Grid) -> Result<DensityCurve> {
    if samples.positions.len() < 4 {
        return Err(Error::Argument(format!(
            "spline fit needs at least 4 samples (got {})",
            samples.positions.len()
        )));
    }
    let spline = NaturalSpline::new(samples.positions.clone(), samples.weights.clone())?;
    let raw: Vec<f64> = eval_grid
        .points()
        .into_iter()
        .map(|x| spline.eval(x).max(0.0))
        .collect();
    let mut curve = DensityCurve::from_intensity(0.0, eval_grid, raw)?;
    curve.smoothing = Some(SmoothingTag::Spline);
    Ok(curve)
}

/// Total variation `Σ |v_{i+1} - v_i|`.
pub fn total_variation(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}
