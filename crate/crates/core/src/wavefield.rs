//! Two-slit Gaussian source and paraxial (1+1D) propagation.
//!
//! Units: transverse positions in mm, propagation distance in m at the API
//! boundary (converted to mm internally), wavelength in nm.
//!
//! The paraxial equation `∂ψ/∂z = (i/2k) ∂²ψ/∂x²` is solved two ways:
//! in closed form for each Gaussian slit term ([`propagate_analytic`]) and
//! by an angular-spectrum FFT step ([`propagate_spectral`]).

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::density::DensityCurve;
use crate::error::{Error, Result};
use crate::grid::{trapezoid, Grid};
use crate::weak_momentum::{KxkCurve, Quantity};

/// Relative density below which a phase-gradient sample is masked.
pub const NODE_FLOOR: f64 = 1e-12;
/// Largest tolerated missing mass when sampling a field on a grid.
pub const TRUNCATION_TOLERANCE: f64 = 1e-6;
/// Largest tolerated fraction of mass in the outer edge bands before a
/// spectral step is declared aliased.
pub const ALIASING_TOLERANCE: f64 = 1e-8;

const MM_PER_M: f64 = 1000.0;
const MM_PER_NM: f64 = 1e-6;

/// Source geometry. Lengths in mm, wavelength in nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlitConfig {
    /// Centre-to-centre distance `2a`.
    pub slit_separation_mm: f64,
    /// Gaussian half-width σ: `|ψ|²` of one slit has standard deviation σ.
    pub slit_sigma_mm: f64,
    pub wavelength_nm: f64,
    /// Amplitude of the slit at `-a` relative to the one at `+a`.
    /// Zero together with zero separation selects a single slit at `x = 0`.
    pub amplitude_ratio: f64,
    pub relative_phase_rad: f64,
}

impl Default for SlitConfig {
    fn default() -> Self {
        SlitConfig {
            slit_separation_mm: 4.7,
            slit_sigma_mm: 0.3,
            wavelength_nm: 943.0,
            amplitude_ratio: 1.0,
            relative_phase_rad: 0.0,
        }
    }
}

impl SlitConfig {
    /// One Gaussian aperture centred on the axis.
    pub fn single_slit(slit_sigma_mm: f64, wavelength_nm: f64) -> Self {
        SlitConfig {
            slit_separation_mm: 0.0,
            slit_sigma_mm,
            wavelength_nm,
            amplitude_ratio: 0.0,
            relative_phase_rad: 0.0,
        }
    }

    pub fn is_single_slit(&self) -> bool {
        self.amplitude_ratio == 0.0 && self.slit_separation_mm == 0.0
    }

    /// Lists every violated invariant; empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.slit_sigma_mm > 0.0 && self.slit_sigma_mm.is_finite()) {
            v.push(format!("slit_sigma_mm must be > 0 (got {})", self.slit_sigma_mm));
        }
        if !(self.wavelength_nm > 0.0 && self.wavelength_nm.is_finite()) {
            v.push(format!("wavelength_nm must be > 0 (got {})", self.wavelength_nm));
        }
        if !self.relative_phase_rad.is_finite() {
            v.push("relative_phase_rad must be finite".into());
        }
        if !self.is_single_slit() {
            if !(self.amplitude_ratio > 0.0 && self.amplitude_ratio.is_finite()) {
                v.push(format!(
                    "amplitude_ratio must be > 0 (got {})",
                    self.amplitude_ratio
                ));
            }
            if !(self.slit_separation_mm > 2.0 * self.slit_sigma_mm) {
                v.push(format!(
                    "slit_separation_mm must exceed 2*slit_sigma_mm (got {} vs sigma {})",
                    self.slit_separation_mm, self.slit_sigma_mm
                ));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    /// Wavenumber `2π/λ` in 1/mm.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / (self.wavelength_nm * MM_PER_NM)
    }

    /// Rayleigh-like range `z_R = 2kσ²`, in m.
    pub fn rayleigh_range_m(&self) -> f64 {
        2.0 * self.wavenumber() * self.slit_sigma_mm * self.slit_sigma_mm / MM_PER_M
    }

    /// Half separation `a` in mm.
    pub fn half_separation(&self) -> f64 {
        0.5 * self.slit_separation_mm
    }

    /// Standard deviation of one slit's density after propagating `z_m`.
    pub fn width_at(&self, z_m: f64) -> f64 {
        let t = z_m / self.rayleigh_range_m();
        self.slit_sigma_mm * (1.0 + t * t).sqrt()
    }

    /// Far-field fringe spacing `λz/(2a)` in mm.
    pub fn fringe_spacing(&self, z_m: f64) -> f64 {
        self.wavelength_nm * MM_PER_NM * z_m * MM_PER_M / self.slit_separation_mm
    }

    /// Squared norm of the unnormalized superposition (conserved in z).
    fn analytic_norm_sq(&self) -> f64 {
        if self.is_single_slit() {
            return 1.0;
        }
        let r = self.amplitude_ratio;
        let a = self.half_separation();
        let s = self.slit_sigma_mm;
        let overlap = (-a * a / (2.0 * s * s)).exp();
        1.0 + r * r + 2.0 * r * self.relative_phase_rad.cos() * overlap
    }
}

/// Complex transverse field at one propagation distance.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSlice {
    pub z_m: f64,
    pub grid: Grid,
    pub amplitude: Vec<Complex64>,
    /// Wavenumber in 1/mm.
    pub wavenumber: f64,
}

impl FieldSlice {
    pub fn new(z_m: f64, grid: Grid, amplitude: Vec<Complex64>, wavenumber: f64) -> Result<Self> {
        if amplitude.len() != grid.len() {
            return Err(Error::Argument(format!(
                "field has {} samples but grid has {}",
                amplitude.len(),
                grid.len()
            )));
        }
        if amplitude.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::Data("field contains non-finite entries".into()));
        }
        if !(wavenumber > 0.0) {
            return Err(Error::Argument("wavenumber must be > 0".into()));
        }
        Ok(FieldSlice {
            z_m,
            grid,
            amplitude,
            wavenumber,
        })
    }

    pub fn norm_sq(&self) -> f64 {
        let d: Vec<f64> = self.amplitude.iter().map(|c| c.norm_sqr()).collect();
        trapezoid(&d, self.grid.spacing())
    }

    /// Multiplies by `exp(i q x)`, a transverse tilt of `q` rad/mm.
    pub fn tilted(&self, q: f64) -> FieldSlice {
        let amplitude = self
            .amplitude
            .iter()
            .zip(self.grid.points())
            .map(|(c, x)| c * Complex64::from_polar(1.0, q * x))
            .collect();
        FieldSlice {
            amplitude,
            ..self.clone()
        }
    }

    /// Mass fraction in the outer `n/64` samples on each side.
    pub fn edge_mass_fraction(&self) -> f64 {
        let n = self.grid.len();
        let band = (n / 64).max(2).min(n / 2);
        let d: Vec<f64> = self.amplitude.iter().map(|c| c.norm_sqr()).collect();
        let dx = self.grid.spacing();
        let total = trapezoid(&d, dx);
        if total <= 0.0 {
            return 0.0;
        }
        (trapezoid(&d[..band], dx) + trapezoid(&d[n - band..], dx)) / total
    }
}

/// One propagated Gaussian slit term, unit norm, centred at `centre`.
fn gaussian_term(x: f64, centre: f64, sigma: f64, tau: f64) -> Complex64 {
    let q = Complex64::new(1.0, tau);
    let pref = (2.0 * PI * sigma * sigma).powf(-0.25) / q.sqrt();
    let u = x - centre;
    pref * (-(u * u) / (4.0 * sigma * sigma * q)).exp()
}

fn superposition(cfg: &SlitConfig, grid: Grid, z_m: f64) -> Result<FieldSlice> {
    cfg.validate()?;
    if !(z_m >= 0.0) {
        return Err(Error::Argument(format!("z must be >= 0 (got {z_m})")));
    }
    let tau = z_m / cfg.rayleigh_range_m();
    let a = cfg.half_separation();
    let s = cfg.slit_sigma_mm;
    let norm = cfg.analytic_norm_sq().sqrt();
    let second = Complex64::from_polar(cfg.amplitude_ratio, cfg.relative_phase_rad);
    let amplitude: Vec<Complex64> = grid
        .points()
        .into_iter()
        .map(|x| {
            let mut psi = gaussian_term(x, a, s, tau);
            if !cfg.is_single_slit() {
                psi += second * gaussian_term(x, -a, s, tau);
            }
            psi / norm
        })
        .collect();
    let mut field = FieldSlice::new(z_m, grid, amplitude, cfg.wavenumber())?;
    let captured = field.norm_sq();
    if (1.0 - captured).abs() > TRUNCATION_TOLERANCE {
        return Err(Error::Config(format!(
            "grid [{}, {}] mm with {} points does not capture the field at z={z_m} m \
             (sampled norm {captured:.9}, tolerance {TRUNCATION_TOLERANCE:e})",
            grid.x_min(),
            grid.x_max(),
            grid.len()
        )));
    }
    let scale = captured.sqrt();
    field.amplitude.iter_mut().for_each(|c| *c /= scale);
    Ok(field)
}

/// Two-slit superposition at the slit plane, normalized to unit trapezoid norm.
pub fn make_two_slit_field(cfg: &SlitConfig, grid: Grid) -> Result<FieldSlice> {
    cfg.validate()?;
    let reach = cfg.half_separation() + 5.0 * cfg.slit_sigma_mm;
    if grid.x_min() > -reach || grid.x_max() < reach {
        return Err(Error::Config(format!(
            "grid [{}, {}] mm must span at least ±{reach} mm (a + 5σ)",
            grid.x_min(),
            grid.x_max()
        )));
    }
    superposition(cfg, grid, 0.0)
}

/// Closed-form paraxial propagation of the superposition to `z_m`.
pub fn propagate_analytic(cfg: &SlitConfig, grid: Grid, z_m: f64) -> Result<FieldSlice> {
    superposition(cfg, grid, z_m)
}

/// Angular-spectrum step by `dz_m`: multiplies the spatial spectrum by
/// `exp(-i q² dz / 2k)`.
pub fn propagate_spectral(field: &FieldSlice, dz_m: f64) -> Result<FieldSlice> {
    if !(dz_m >= 0.0) {
        return Err(Error::Argument(format!("dz must be >= 0 (got {dz_m})")));
    }
    let edge_in = field.edge_mass_fraction();
    if edge_in > ALIASING_TOLERANCE {
        return Err(Error::Numerical(format!(
            "input field at z={} m has edge mass fraction {edge_in:e}; widen the grid",
            field.z_m
        )));
    }
    let n = field.grid.len();
    let dx = field.grid.spacing();
    let dz = dz_m * MM_PER_M;
    let k = field.wavenumber;

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let mut buf = field.amplitude.clone();
    forward.process(&mut buf);
    let dq = 2.0 * PI / (n as f64 * dx);
    for (m, c) in buf.iter_mut().enumerate() {
        let idx = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
        let q = idx * dq;
        *c *= Complex64::from_polar(1.0 / n as f64, -q * q * dz / (2.0 * k));
    }
    inverse.process(&mut buf);

    let out = FieldSlice::new(field.z_m + dz_m, field.grid, buf, k)?;
    let edge_out = out.edge_mass_fraction();
    if edge_out > ALIASING_TOLERANCE {
        return Err(Error::Numerical(format!(
            "aliasing: propagated field at z={} m has edge mass fraction {edge_out:e}",
            out.z_m
        )));
    }
    Ok(out)
}

/// `|ψ|²` normalized to unit integral.
pub fn intensity(field: &FieldSlice) -> Result<DensityCurve> {
    let raw: Vec<f64> = field.amplitude.iter().map(|c| c.norm_sqr()).collect();
    if raw.iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate(format!(
            "field at z={} m is identically zero",
            field.z_m
        )));
    }
    DensityCurve::from_intensity(field.z_m, field.grid, raw)
}

/// Local `k_x/|k| = (1/k) ∂φ/∂x = Im(ψ* ψ') / (k |ψ|²)`.
///
/// Derivatives are second-order central differences, one-sided second-order
/// stencils at the two boundary samples. Samples whose density falls below
/// [`NODE_FLOOR`] of the peak are masked.
pub fn phase_gradient_slope(field: &FieldSlice) -> KxkCurve {
    let psi = &field.amplitude;
    let n = psi.len();
    let dx = field.grid.spacing();
    let peak = psi.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max);
    let floor = NODE_FLOOR * peak;
    let mut values = vec![0.0; n];
    let mut valid = vec![false; n];
    for i in 0..n {
        let rho = psi[i].norm_sqr();
        if !(rho > floor) || n < 3 {
            continue;
        }
        let d = if i == 0 {
            (-3.0 * psi[0] + 4.0 * psi[1] - psi[2]) / (2.0 * dx)
        } else if i == n - 1 {
            (3.0 * psi[n - 1] - 4.0 * psi[n - 2] + psi[n - 3]) / (2.0 * dx)
        } else {
            (psi[i + 1] - psi[i - 1]) / (2.0 * dx)
        };
        let v = (psi[i].conj() * d).im / (rho * field.wavenumber);
        if v.is_finite() && v.abs() < 1.0 {
            values[i] = v;
            valid[i] = true;
        }
    }
    KxkCurve {
        z_m: field.z_m,
        xs: field.grid.points(),
        values,
        valid,
        clamped: vec![false; n],
        quantity: Quantity::KxOverK,
        zeta: None,
        mode: "phase_gradient".into(),
    }
}
