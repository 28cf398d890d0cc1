//! CCD measurement chain: pixelization, shot noise, background, normalization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::density::DensityCurve;
use crate::error::{Error, Result};
use crate::grid::{trapezoid, Grid};
use crate::weak_momentum::{CouplingConstant, KxkCurve};

/// Pixel pitch of the camera in the two-slit experiment.
pub const REFERENCE_PITCH_UM: f64 = 26.0;
/// Generator identity written to frame metadata.
pub const RNG_NAME: &str = "chacha8";

/// Largest density mass allowed to fall outside the pixel window.
const COVERAGE_TOLERANCE: f64 = 1e-6;

/// Pixel layout: `n_pixels` of size `pitch_um * magnification` (µm in the
/// object plane), centred at `center_mm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorGeometry {
    pub pitch_um: f64,
    pub magnification: f64,
    pub n_pixels: usize,
    #[serde(default)]
    pub center_mm: f64,
}

impl SensorGeometry {
    pub fn new(pitch_um: f64, magnification: f64, n_pixels: usize) -> Result<Self> {
        let g = SensorGeometry {
            pitch_um,
            magnification,
            n_pixels,
            center_mm: 0.0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pitch_um > 0.0 && self.magnification > 0.0) || self.n_pixels < 2 {
            return Err(Error::Config(format!(
                "sensor needs pitch > 0, magnification > 0 and >= 2 pixels (got {self:?})"
            )));
        }
        Ok(())
    }

    /// Pixel width in real transverse mm.
    pub fn pixel_mm(&self) -> f64 {
        self.pitch_um * 1e-3 * self.magnification
    }

    pub fn centers(&self) -> Vec<f64> {
        let s = self.pixel_mm();
        let mid = 0.5 * (self.n_pixels as f64 - 1.0);
        (0..self.n_pixels)
            .map(|i| self.center_mm + (i as f64 - mid) * s)
            .collect()
    }
}

/// Frame of right/left circular polarization counts at one plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelImage {
    pub z_m: f64,
    pub pitch_um: f64,
    pub magnification: f64,
    pub pixel_centers: Vec<f64>,
    pub counts_r: Vec<f64>,
    pub counts_l: Vec<f64>,
    /// `<generator>:<seed>` when noise was drawn.
    pub rng: Option<String>,
}

impl PixelImage {
    pub fn len(&self) -> usize {
        self.pixel_centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixel_centers.is_empty()
    }

    pub fn pixel_mm(&self) -> f64 {
        self.pitch_um * 1e-3 * self.magnification
    }

    /// Uniform grid through the pixel centres.
    pub fn grid(&self) -> Result<Grid> {
        let n = self.pixel_centers.len();
        Grid::new(self.pixel_centers[0], self.pixel_centers[n - 1], n)
    }

    pub fn channel(&self, channel: Channel) -> Vec<f64> {
        match channel {
            Channel::Right => self.counts_r.clone(),
            Channel::Left => self.counts_l.clone(),
            Channel::Sum => self
                .counts_r
                .iter()
                .zip(&self.counts_l)
                .map(|(r, l)| r + l)
                .collect(),
        }
    }

    pub fn total(&self, channel: Channel) -> f64 {
        self.channel(channel).iter().sum()
    }

    /// Checks the frame invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.pixel_centers.len();
        if n < 2 || self.counts_r.len() != n || self.counts_l.len() != n {
            return Err(Error::Data(format!(
                "frame at z={} m has inconsistent lengths",
                self.z_m
            )));
        }
        if self
            .counts_r
            .iter()
            .chain(&self.counts_l)
            .any(|c| !(c.is_finite() && *c >= 0.0))
        {
            return Err(Error::Data(format!(
                "frame at z={} m has negative or non-finite counts",
                self.z_m
            )));
        }
        let s = self.pixel_mm();
        let uniform = self
            .pixel_centers
            .windows(2)
            .all(|w| ((w[1] - w[0]) - s).abs() <= 1e-9 * s.max(1.0));
        if !uniform {
            return Err(Error::Data(format!(
                "frame at z={} m: pixel centres must be uniformly spaced by pitch x magnification",
                self.z_m
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Right,
    Left,
    Sum,
}

/// Shot-noise model for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Expected total photon counts per frame.
    pub photon_budget: f64,
    /// Expected background counts per pixel and channel.
    pub background_level: f64,
    pub rng_seed: u64,
}

impl NoiseConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.photon_budget > 0.0 && self.photon_budget.is_finite()) {
            v.push(format!("photon_budget must be > 0 (got {})", self.photon_budget));
        }
        if !(self.background_level >= 0.0 && self.background_level.is_finite()) {
            v.push(format!(
                "background_level must be >= 0 (got {})",
                self.background_level
            ));
        }
        v
    }

    /// Per-frame seed, independent of evaluation order.
    pub fn frame_seed(&self, plane_index: usize) -> u64 {
        self.rng_seed ^ plane_index as u64
    }

    pub fn for_plane(&self, plane_index: usize) -> NoiseConfig {
        NoiseConfig {
            rng_seed: self.frame_seed(plane_index),
            ..*self
        }
    }
}

/// Exact expected counts of a density seen through the polarization split.
///
/// Each pixel receives the density mass over its extent, divided so that
/// `(R - L)/(R + L) = sin(ζ · k_x/|k|)` at the pixel centre.
pub fn project_to_pixels(
    density: &DensityCurve,
    aux_kxk: &KxkCurve,
    geometry: &SensorGeometry,
    zeta: CouplingConstant,
) -> Result<PixelImage> {
    geometry.validate()?;
    let centers = geometry.centers();
    let half = 0.5 * geometry.pixel_mm();
    let nodes = density.cdf_nodes();
    let masses: Vec<f64> = centers
        .iter()
        .map(|&c| {
            (density.cdf_at_with(&nodes, c + half) - density.cdf_at_with(&nodes, c - half)).max(0.0)
        })
        .collect();
    let captured: f64 = masses.iter().sum();
    let expected = nodes[nodes.len() - 1];
    if expected - captured > COVERAGE_TOLERANCE * expected {
        return Err(Error::Config(format!(
            "pixel window [{:.4}, {:.4}] mm misses {:e} of the density mass at z={} m",
            centers[0] - half,
            centers[centers.len() - 1] + half,
            (expected - captured) / expected,
            density.z_m
        )));
    }
    let kxk = aux_kxk.interpolator()?;
    let peak = masses.iter().cloned().fold(0.0, f64::max);
    let mut counts_r = Vec::with_capacity(centers.len());
    let mut counts_l = Vec::with_capacity(centers.len());
    for (&c, &m) in centers.iter().zip(&masses) {
        let phase = zeta.value() * kxk.eval(c);
        if phase.abs() >= std::f64::consts::FRAC_PI_2 && m > 1e-12 * peak {
            return Err(Error::Config(format!(
                "zeta*k_x/|k| = {phase:.4} at x={c:.4} mm leaves the arcsin branch; zeta too large for this field"
            )));
        }
        let s = phase.sin();
        counts_r.push(0.5 * m * (1.0 + s));
        counts_l.push(0.5 * m * (1.0 - s));
    }
    Ok(PixelImage {
        z_m: density.z_m,
        pitch_um: geometry.pitch_um,
        magnification: geometry.magnification,
        pixel_centers: centers,
        counts_r,
        counts_l,
        rng: None,
    })
}

/// Noiseless frame at the given budget: `photon_budget * count + background`.
pub fn expected_counts(img: &PixelImage, noise: &NoiseConfig) -> PixelImage {
    let scale = |c: &f64| noise.photon_budget * c + noise.background_level;
    PixelImage {
        counts_r: img.counts_r.iter().map(scale).collect(),
        counts_l: img.counts_l.iter().map(scale).collect(),
        rng: None,
        ..img.clone()
    }
}

/// Replaces each count by a Poisson draw with mean
/// `photon_budget * count + background_level`.
pub fn add_noise(img: &PixelImage, noise: &NoiseConfig) -> PixelImage {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.rng_seed);
    let mut draw = |c: &f64| {
        let mean = noise.photon_budget * c + noise.background_level;
        if mean > 0.0 {
            Poisson::new(mean).map(|p| p.sample(&mut rng)).unwrap_or(mean)
        } else {
            0.0
        }
    };
    let counts_r: Vec<f64> = img.counts_r.iter().map(&mut draw).collect();
    let counts_l: Vec<f64> = img.counts_l.iter().map(&mut draw).collect();
    PixelImage {
        counts_r,
        counts_l,
        rng: Some(format!("{RNG_NAME}:{}", noise.rng_seed)),
        ..img.clone()
    }
}

/// `max(count - estimate, 0)` per pixel and channel.
pub fn subtract_background(img: &PixelImage, background_estimate: f64) -> Result<PixelImage> {
    if !(background_estimate >= 0.0) {
        return Err(Error::Argument(format!(
            "background estimate must be >= 0 (got {background_estimate})"
        )));
    }
    let sub = |c: &f64| (c - background_estimate).max(0.0);
    Ok(PixelImage {
        counts_r: img.counts_r.iter().map(sub).collect(),
        counts_l: img.counts_l.iter().map(sub).collect(),
        ..img.clone()
    })
}

/// Density per real mm: counts over their trapezoid integral on the
/// magnified pixel grid.
pub fn normalize_magnified(img: &PixelImage, channel: Channel) -> Result<DensityCurve> {
    let grid = img.grid()?;
    let counts = img.channel(channel);
    if trapezoid(&counts, grid.spacing()) <= 0.0 {
        return Err(Error::Degenerate(format!(
            "frame at z={} m has zero {channel:?} counts",
            img.z_m
        )));
    }
    DensityCurve::from_intensity(img.z_m, grid, counts)
}

/// Counts over their sum, ignoring pixel size.
///
/// The result sums to one but integrates to the pixel width, so it is not a
/// density per mm unless pixels happen to be 1 mm wide.
pub fn normalize_legacy(img: &PixelImage, channel: Channel) -> Result<DensityCurve> {
    let grid = img.grid()?;
    DensityCurve::from_counts_summed(img.z_m, grid, img.channel(channel))
}
