//! Polarization-resolved intensities to transverse momentum and slope.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::density::DensityCurve;
use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;

/// Reference coupling coefficient reported for the two-slit experiment.
pub const REFERENCE_ZETA: f64 = 373.5;
/// Samples with summed intensity below this fraction of the frame peak are masked.
pub const LOW_INTENSITY_FRACTION: f64 = 1e-3;
/// Ratios beyond ±1 (possible after noise and background subtraction) are
/// clamped to ±(1 − this).
pub const RATIO_CLAMP_MARGIN: f64 = 1e-12;

/// Coupling between polarization asymmetry and `k_x/|k|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CouplingConstant(f64);

impl CouplingConstant {
    pub fn new(zeta: f64) -> Result<Self> {
        if zeta > 0.0 && zeta.is_finite() {
            Ok(CouplingConstant(zeta))
        } else {
            Err(Error::Argument(format!("zeta must be > 0 (got {zeta})")))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    /// Largest `|k_x/|k||` the arcsin branch can represent.
    pub fn max_kxk(&self) -> f64 {
        FRAC_PI_2 / self.0
    }
}

impl Default for CouplingConstant {
    fn default() -> Self {
        CouplingConstant(REFERENCE_ZETA)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumMode {
    /// `(1/ζ) asin(r)`.
    Corrected,
    /// `(1/ζ) tan(asin(r))`: `tan` applied to the arcsin.
    LegacyTan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// `dx/dz = v / sqrt(1 - v²)`.
    Corrected,
    /// `dx/dz = v`, omitting the `|k|/k_z` factor.
    LegacyDirect,
}

/// What the `values` of a [`KxkCurve`] represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    KxOverK,
    Slope,
}

/// Masked samples of `k_x/|k|` (or of the slope `dx/dz`) at one plane.
#[derive(Debug, Clone, PartialEq)]
pub struct KxkCurve {
    pub z_m: f64,
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    /// `true` where the sample may be used.
    pub valid: Vec<bool>,
    /// `true` where a noisy ratio was clamped into [-1, 1].
    pub clamped: Vec<bool>,
    pub quantity: Quantity,
    pub zeta: Option<f64>,
    pub mode: String,
}

/// Same layout as [`KxkCurve`]; `values` are `dx/dz`.
pub type SlopeCurve = KxkCurve;

impl KxkCurve {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn masked_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    pub fn clamped_count(&self) -> usize {
        self.clamped.iter().filter(|v| **v).count()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Sample range `[xs[0], xs[n-1]]`, masked or not.
    pub fn x_range(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    /// Monotone piecewise-cubic interpolant over the unmasked samples,
    /// returning 0 outside their range.
    pub fn interpolator(&self) -> Result<MonotoneCubic> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .xs
            .iter()
            .zip(&self.values)
            .zip(&self.valid)
            .filter(|(_, ok)| **ok)
            .map(|((x, v), _)| (*x, *v))
            .unzip();
        if xs.len() < 4 {
            return Err(Error::Data(format!(
                "curve at z={} m has {} unmasked samples; at least 4 are required",
                self.z_m,
                xs.len()
            )));
        }
        MonotoneCubic::new(xs, ys, 0.0)
    }
}

/// Inverts right/left circular intensities into `k_x/|k|`.
///
/// The two curves may be normalized independently; their `mass` factors
/// restore the common intensity scale before the asymmetry is formed.
pub fn infer_kx_over_k(
    right: &DensityCurve,
    left: &DensityCurve,
    zeta: CouplingConstant,
    mode: MomentumMode,
) -> Result<KxkCurve> {
    if right.grid != left.grid {
        return Err(Error::Argument(
            "right and left intensities must share x samples".into(),
        ));
    }
    if right.z_m != left.z_m {
        return Err(Error::Argument(format!(
            "right and left intensities are at different planes ({} vs {} m)",
            right.z_m, left.z_m
        )));
    }
    let ir = right.intensity();
    let il = left.intensity();
    let sums: Vec<f64> = ir.iter().zip(&il).map(|(r, l)| r + l).collect();
    let peak = sums.iter().cloned().fold(0.0, f64::max);
    let floor = LOW_INTENSITY_FRACTION * peak;
    let n = sums.len();
    let mut values = vec![0.0; n];
    let mut valid = vec![false; n];
    let mut clamped = vec![false; n];
    let bound = 1.0 - RATIO_CLAMP_MARGIN;
    for i in 0..n {
        if !(sums[i] > 0.0) || sums[i] < floor {
            continue;
        }
        let mut ratio = (ir[i] - il[i]) / sums[i];
        if ratio.abs() > 1.0 {
            ratio = ratio.clamp(-bound, bound);
            clamped[i] = true;
        }
        let angle = ratio.asin();
        let raw = match mode {
            MomentumMode::Corrected => angle,
            MomentumMode::LegacyTan => angle.tan(),
        };
        values[i] = raw / zeta.value();
        valid[i] = values[i].abs() < 1.0;
    }
    Ok(KxkCurve {
        z_m: right.z_m,
        xs: right.xs(),
        values,
        valid,
        clamped,
        quantity: Quantity::KxOverK,
        zeta: Some(zeta.value()),
        mode: match mode {
            MomentumMode::Corrected => "corrected".into(),
            MomentumMode::LegacyTan => "legacy_tan".into(),
        },
    })
}

/// Single-sample slope conversion; `None` at grazing incidence `|v| >= 1`.
pub fn slope_of(v: f64, mode: UpdateMode) -> Option<f64> {
    if !(v.abs() < 1.0) {
        return None;
    }
    Some(match mode {
        UpdateMode::Corrected => corrected_slope(v),
        UpdateMode::LegacyDirect => v,
    })
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `v / sqrt(1 - v²)`, correctly rounded in practice: one Newton step on
/// `s²(1 - v²) = v²` with the residual carried in double-double.
fn corrected_slope(v: f64) -> f64 {
    let s0 = v / (1.0 - v * v).sqrt();
    if s0 == 0.0 {
        return s0;
    }
    let (a, ae) = two_prod(s0, s0);
    let (b, be) = two_prod(v, v);
    let (c, ce) = two_prod(b, a);
    let (d, de) = two_sum(a, -b);
    let (h, he) = two_sum(d, -c);
    let residual = h + (he + de + ae - be - ce - b * ae - be * a);
    s0 - residual / (2.0 * s0 * (1.0 - v) * (1.0 + v))
}

/// Converts `k_x/|k|` to the trajectory slope `dx/dz`.
pub fn slope_from_kxk(kxk: &KxkCurve, mode: UpdateMode) -> Result<SlopeCurve> {
    if kxk.quantity != Quantity::KxOverK {
        return Err(Error::Argument(
            "slope_from_kxk expects a k_x/|k| curve, got a slope curve".into(),
        ));
    }
    let mut out = kxk.clone();
    for i in 0..out.values.len() {
        if !out.valid[i] {
            out.values[i] = 0.0;
            continue;
        }
        match slope_of(kxk.values[i], mode) {
            Some(s) => out.values[i] = s,
            None => {
                out.values[i] = 0.0;
                out.valid[i] = false;
            }
        }
    }
    out.quantity = Quantity::Slope;
    out.mode = format!(
        "{}+{}",
        kxk.mode,
        match mode {
            UpdateMode::Corrected => "corrected",
            UpdateMode::LegacyDirect => "legacy_direct",
        }
    );
    Ok(out)
}
