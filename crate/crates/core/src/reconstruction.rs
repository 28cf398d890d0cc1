//! From polarization frames to average photon trajectories.
//!
//! [`analyze_frame`] turns one frame into a slope curve
//! (background → normalization → smoothing → momentum inversion → slope),
//! and [`reconstruct_ensemble`] integrates seeds through the slope curves
//! with explicit Euler steps. Each stage has a legacy variant selected by
//! [`PipelineMode`], so the corrected and legacy procedures can be run
//! side by side on the same data.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bohm::{measured_bohm_trajectories, seed_quantiles, BohmInterp, QuantileSeeds};
use crate::density::DensityCurve;
use crate::ensemble::{EnsembleDiagnostics, TrajectoryEnsemble};
use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::sensor::{normalize_legacy, normalize_magnified, subtract_background, Channel, PixelImage};
use crate::smoothing::{kde_estimate, silverman_bandwidth, spline_fit, WeightedSamples};
use crate::weak_momentum::{
    infer_kx_over_k, slope_from_kxk, CouplingConstant, KxkCurve, MomentumMode, Quantity,
    SlopeCurve, UpdateMode,
};

const MM_PER_M: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Divide by the integral over the magnified pixel grid.
    Corrected,
    /// Divide by the count sum.
    Legacy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingMode {
    Kde,
    Spline,
}

/// One choice per pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineMode {
    pub normalization: NormalizationMode,
    pub momentum: MomentumMode,
    pub update: UpdateMode,
    pub smoothing: SmoothingMode,
    pub bohm_interp: BohmInterp,
}

impl PipelineMode {
    pub fn corrected() -> Self {
        PipelineMode {
            normalization: NormalizationMode::Corrected,
            momentum: MomentumMode::Corrected,
            update: UpdateMode::Corrected,
            smoothing: SmoothingMode::Kde,
            bohm_interp: BohmInterp::CorrectedCdfxWise,
        }
    }

    /// Every stage in its legacy form, spline smoothing included.
    pub fn legacy() -> Self {
        PipelineMode {
            normalization: NormalizationMode::Legacy,
            momentum: MomentumMode::LegacyTan,
            update: UpdateMode::LegacyDirect,
            smoothing: SmoothingMode::Spline,
            bohm_interp: BohmInterp::LegacyCdfx,
        }
    }

    /// Short tag used in labels and CSV headers, e.g. `corrected` or
    /// `custom:smoothing=spline`.
    pub fn tag(&self) -> String {
        if *self == PipelineMode::corrected() {
            return "corrected".into();
        }
        if *self == PipelineMode::legacy() {
            return "legacy".into();
        }
        let base = PipelineMode::corrected();
        let mut parts = Vec::new();
        let fields = [
            ("normalization", enum_str(&self.normalization), enum_str(&base.normalization)),
            ("momentum", enum_str(&self.momentum), enum_str(&base.momentum)),
            ("update", enum_str(&self.update), enum_str(&base.update)),
            ("smoothing", enum_str(&self.smoothing), enum_str(&base.smoothing)),
            ("bohm_interp", enum_str(&self.bohm_interp), enum_str(&base.bohm_interp)),
        ];
        for (name, value, default) in fields {
            if value != default {
                parts.push(format!("{name}={value}"));
            }
        }
        format!("custom:{}", parts.join(","))
    }
}

impl Default for PipelineMode {
    fn default() -> Self {
        PipelineMode::corrected()
    }
}

fn enum_str<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

fn parse_field<T: for<'de> Deserialize<'de>>(name: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| Error::Argument(format!("unknown value '{value}' for mode field '{name}'")))
}

impl FromStr for PipelineMode {
    type Err = Error;

    /// Accepts `corrected`, `legacy`, or `custom:field=value,...` where unset
    /// fields keep their corrected value.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corrected" => return Ok(PipelineMode::corrected()),
            "legacy" => return Ok(PipelineMode::legacy()),
            _ => {}
        }
        let body = s.strip_prefix("custom:").ok_or_else(|| {
            Error::Argument(format!(
                "mode must be corrected, legacy or custom:field=value,... (got '{s}')"
            ))
        })?;
        let mut mode = PipelineMode::corrected();
        for item in body.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(|| {
                Error::Argument(format!("mode item '{item}' is not field=value"))
            })?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "normalization" => mode.normalization = parse_field(k, v)?,
                "momentum" => mode.momentum = parse_field(k, v)?,
                "update" => mode.update = parse_field(k, v)?,
                "smoothing" => mode.smoothing = parse_field(k, v)?,
                "bohm_interp" => mode.bohm_interp = parse_field(k, v)?,
                other => {
                    return Err(Error::Argument(format!("unknown mode field '{other}'")));
                }
            }
        }
        Ok(mode)
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

/// Slope at `x`: monotone cubic through the unmasked samples, 0 outside them.
pub fn interpolate_slope(slope: &SlopeCurve, x: f64) -> Result<f64> {
    check_slope(slope)?;
    Ok(slope.interpolator()?.eval(x))
}

/// One Euler step: `x + dz · slope(x)`, with `dz` in metres and `x` in mm.
pub fn advance(x: f64, dz_m: f64, slope: &SlopeCurve) -> Result<f64> {
    if !(dz_m > 0.0) {
        return Err(Error::Argument(format!("dz must be > 0 (got {dz_m} m)")));
    }
    Ok(x + dz_m * MM_PER_M * interpolate_slope(slope, x)?)
}

fn check_slope(slope: &SlopeCurve) -> Result<()> {
    if slope.quantity != Quantity::Slope {
        return Err(Error::Argument(format!(
            "expected a slope curve at z={} m, got k_x/|k|",
            slope.z_m
        )));
    }
    Ok(())
}

/// Euler integration of every seed through the slope planes.
///
/// Trajectory `i` starts at `seeds.positions[i]` on the first plane and moves
/// by `Δz · slope_{j-1}(x)` to plane `j`. A trajectory that leaves the pixel
/// window of the plane it is about to step from is masked from the next plane
/// on and listed in `diagnostics.truncated`; one that only enters the zero-fill
/// region outside the unmasked samples is listed in `drifted_outside`.
pub fn reconstruct_ensemble(
    slopes: &[SlopeCurve],
    seeds: &QuantileSeeds,
    mode: &PipelineMode,
) -> Result<TrajectoryEnsemble> {
    let z: Vec<f64> = slopes.iter().map(|s| s.z_m).collect();
    if z.len() < 2 {
        return Err(Error::Argument("need at least 2 slope planes".into()));
    }
    if z.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Argument("slope planes must be z-ordered".into()));
    }
    for s in slopes {
        check_slope(s)?;
    }
    let (lo, hi) = slopes[0].x_range();
    if let Some(bad) = seeds.positions.iter().find(|&&x| x < lo || x > hi) {
        return Err(Error::Argument(format!(
            "seed at {bad} mm lies outside the first plane [{lo}, {hi}] mm"
        )));
    }
    let interps: Vec<MonotoneCubic> = slopes[..slopes.len() - 1]
        .iter()
        .map(|s| s.interpolator())
        .collect::<Result<_>>()?;

    struct Track {
        row: Vec<Option<f64>>,
        truncated: bool,
        drifted: bool,
    }

    let tracks: Vec<Track> = seeds
        .positions
        .par_iter()
        .map(|&x0| {
            let mut row = Vec::with_capacity(z.len());
            row.push(Some(x0));
            let mut x = x0;
            let mut truncated = false;
            let mut drifted = false;
            for j in 1..z.len() {
                let plane = &slopes[j - 1];
                let (lo, hi) = plane.x_range();
                if truncated || x < lo || x > hi {
                    truncated = true;
                    row.push(None);
                    continue;
                }
                let (vlo, vhi) = interps[j - 1].x_range();
                if x < vlo || x > vhi {
                    drifted = true;
                }
                x += (z[j] - z[j - 1]) * MM_PER_M * interps[j - 1].eval(x);
                row.push(Some(x));
            }
            Track {
                row,
                truncated,
                drifted,
            }
        })
        .collect();

    let mut diagnostics = EnsembleDiagnostics::default();
    let mut rows = Vec::with_capacity(tracks.len());
    for (i, t) in tracks.into_iter().enumerate() {
        if t.truncated {
            diagnostics.truncated.push(i);
        }
        if t.drifted {
            diagnostics.drifted_outside.push(i);
        }
        rows.push(t.row);
    }
    let mut ens = TrajectoryEnsemble::new(z, rows, format!("photon_{}", mode.tag()))?;
    ens.diagnostics = diagnostics;
    Ok(ens)
}

/// Everything derived from one frame.
#[derive(Debug, Clone)]
pub struct FrameAnalysis {
    pub z_m: f64,
    /// Summed-channel density as normalized by the mode, before smoothing.
    pub raw_density: DensityCurve,
    pub right: DensityCurve,
    pub left: DensityCurve,
    /// Smoothed right + left.
    pub smoothed: DensityCurve,
    pub kxk: KxkCurve,
    pub slope: SlopeCurve,
}

fn normalize(img: &PixelImage, channel: Channel, mode: NormalizationMode) -> Result<DensityCurve> {
    match mode {
        NormalizationMode::Corrected => normalize_magnified(img, channel),
        NormalizationMode::Legacy => normalize_legacy(img, channel),
    }
}

/// Fits a continuous curve to one channel's counts on the pixel grid.
pub fn smooth_channel(channel: &DensityCurve, mode: SmoothingMode) -> Result<DensityCurve> {
    let samples = WeightedSamples::from_density(channel)?;
    let grid = channel.grid;
    let curve = match mode {
        SmoothingMode::Kde => {
            let h = silverman_bandwidth(&samples)?.at_least(0.25 * grid.spacing());
            kde_estimate(&samples, h, grid)?
        }
        SmoothingMode::Spline => spline_fit(&samples, grid)?,
    };
    Ok(curve.with_z(channel.z_m))
}

/// Background subtraction, normalization, smoothing, momentum inversion and
/// slope conversion for one frame.
pub fn analyze_frame(
    img: &PixelImage,
    background: f64,
    zeta: CouplingConstant,
    mode: &PipelineMode,
) -> Result<FrameAnalysis> {
    img.validate()?;
    let img = subtract_background(img, background)?;
    let raw_density = normalize(&img, Channel::Sum, mode.normalization)?;
    let right = smooth_channel(&normalize(&img, Channel::Right, mode.normalization)?, mode.smoothing)?;
    let left = smooth_channel(&normalize(&img, Channel::Left, mode.normalization)?, mode.smoothing)?;
    let sum: Vec<f64> = right
        .intensity()
        .iter()
        .zip(left.intensity())
        .map(|(r, l)| r + l)
        .collect();
    let smoothed = DensityCurve::from_intensity(img.z_m, right.grid, sum)?;
    let kxk = infer_kx_over_k(&right, &left, zeta, mode.momentum)?;
    let slope = slope_from_kxk(&kxk, mode.update)?;
    Ok(FrameAnalysis {
        z_m: img.z_m,
        raw_density,
        right,
        left,
        smoothed,
        kxk,
        slope,
    })
}

/// Per-run counts for manifests and reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineDiagnostics {
    pub clamped_samples: usize,
    pub masked_samples: usize,
    pub truncated_trajectories: usize,
    pub drifted_trajectories: usize,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub mode: PipelineMode,
    pub seeds: QuantileSeeds,
    pub photons: TrajectoryEnsemble,
    /// Bohm ensemble rebuilt from the smoothed measured densities.
    pub data_bohm: TrajectoryEnsemble,
    pub frames: Vec<FrameAnalysis>,
    pub diagnostics: PipelineDiagnostics,
}

/// Full pipeline over z-ordered frames with `n` quantile seeds taken on the
/// first frame.
pub fn reconstruct_from_frames(
    frames: &[PixelImage],
    background: f64,
    zeta: CouplingConstant,
    mode: &PipelineMode,
    n: usize,
) -> Result<Reconstruction> {
    let analyses: Vec<FrameAnalysis> = frames
        .par_iter()
        .map(|f| analyze_frame(f, background, zeta, mode))
        .collect::<Result<_>>()?;
    let seeds = seed_quantiles(&analyses[0].raw_density, n)?;
    reconstruct_from_analyses(analyses, seeds, mode)
}

/// Integration and the data-Bohm rebuild for already analysed frames.
pub fn reconstruct_from_analyses(
    analyses: Vec<FrameAnalysis>,
    seeds: QuantileSeeds,
    mode: &PipelineMode,
) -> Result<Reconstruction> {
    if analyses.is_empty() {
        return Err(Error::Argument("no frames to reconstruct".into()));
    }
    let slopes: Vec<SlopeCurve> = analyses.iter().map(|a| a.slope.clone()).collect();
    let photons = reconstruct_ensemble(&slopes, &seeds, mode)?;
    let smoothed: Vec<DensityCurve> = analyses.iter().map(|a| a.smoothed.clone()).collect();
    let data_bohm = measured_bohm_trajectories(&smoothed, &seeds, mode.bohm_interp, Some(&photons))?;
    let diagnostics = PipelineDiagnostics {
        clamped_samples: analyses.iter().map(|a| a.kxk.clamped_count()).sum(),
        masked_samples: analyses.iter().map(|a| a.slope.masked_count()).sum(),
        truncated_trajectories: photons.diagnostics.truncated.len(),
        drifted_trajectories: photons.diagnostics.drifted_outside.len(),
    };
    Ok(Reconstruction {
        mode: *mode,
        seeds,
        photons,
        data_bohm,
        frames: analyses,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slope_curve(z_m: f64, f: impl Fn(f64) -> f64) -> SlopeCurve {
        let xs: Vec<f64> = (0..201).map(|i| -10.0 + 0.1 * i as f64).collect();
        KxkCurve {
            z_m,
            values: xs.iter().map(|&x| f(x)).collect(),
            valid: vec![true; xs.len()],
            clamped: vec![false; xs.len()],
            xs,
            quantity: Quantity::Slope,
            zeta: None,
            mode: "test".into(),
        }
    }

    #[test]
    fn mode_strings_round_trip() {
        for s in [
            "corrected",
            "legacy",
            "custom:smoothing=spline",
            "custom:momentum=legacy_tan,bohm_interp=legacy_cdfx",
        ] {
            let m: PipelineMode = s.parse().unwrap();
            assert_eq!(m.tag(), s);
        }
        assert!("custom:smoothing=gauss".parse::<PipelineMode>().is_err());
        assert!("custom:colour=red".parse::<PipelineMode>().is_err());
        assert!("fast".parse::<PipelineMode>().is_err());
    }

    #[test]
    fn bohm_interp_uses_documented_spelling() {
        let v = serde_json::to_value(PipelineMode::corrected()).unwrap();
        assert_eq!(v["bohm_interp"], "corrected_cdfxWise");
    }

    #[test]
    fn uniform_slope_displacement() {
        let s = slope_curve(0.0, |_| 2e-3);
        let x = advance(1.0, 1.0, &s).unwrap();
        assert!((x - 3.0).abs() < 1e-12);
    }

    #[test]
    fn linear_slope_reproduced() {
        let s = slope_curve(0.0, |x| 1e-3 * x);
        assert!((interpolate_slope(&s, 3.33).unwrap() - 3.33e-3).abs() < 1e-15);
        assert_eq!(interpolate_slope(&s, 12.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_dz_rejected() {
        let s = slope_curve(0.0, |_| 0.0);
        assert!(matches!(advance(0.0, 0.0, &s), Err(Error::Argument(_))));
    }

    #[test]
    fn leaving_window_truncates() {
        let slopes: Vec<SlopeCurve> = (0..4).map(|j| slope_curve(j as f64, |_| 4e-3)).collect();
        let seeds = QuantileSeeds::new(vec![0.25, 0.75], vec![-5.0, 5.0]).unwrap();
        let ens = reconstruct_ensemble(&slopes, &seeds, &PipelineMode::corrected()).unwrap();
        // 4 mm per plane: the right seed passes 10 mm after two steps
        assert_eq!(ens.rows[1][2], Some(13.0));
        assert_eq!(ens.rows[1][3], None);
        assert_eq!(ens.diagnostics.truncated, vec![1]);
        assert_eq!(ens.rows[0][3], Some(7.0));
    }
}
