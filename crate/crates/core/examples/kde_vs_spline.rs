//! Smoothing a noisy frame: Gaussian KDE with the Silverman bandwidth against
//! a natural cubic spline through the pixel values.
//!
//! cargo run --release --example kde_vs_spline [photon_budget]

use weaktraj::density::DensityCurve;
use weaktraj::grid::{trapezoid, Grid};
use weaktraj::sensor::{add_noise, normalize_magnified, project_to_pixels, Channel, NoiseConfig, SensorGeometry};
use weaktraj::smoothing::{kde_estimate, silverman_bandwidth, spline_fit, total_variation, WeightedSamples};
use weaktraj::wavefield::{intensity, phase_gradient_slope, propagate_analytic, SlitConfig};
use weaktraj::weak_momentum::CouplingConstant;

fn l1(curve: &DensityCurve, truth: &DensityCurve) -> f64 {
    let diff: Vec<f64> = curve
        .xs()
        .iter()
        .zip(&curve.values)
        .map(|(&x, v)| (v - truth.value_at(x)).abs())
        .collect();
    trapezoid(&diff, curve.grid.spacing())
}

fn main() -> weaktraj::error::Result<()> {
    let budget: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1e5);
    let field = propagate_analytic(&SlitConfig::default(), Grid::symmetric(20.0, 4096)?, 5.0)?;
    let truth = intensity(&field)?;
    let geometry = SensorGeometry::new(26.0, 1.0, 1400)?;
    let exact = project_to_pixels(&truth, &phase_gradient_slope(&field), &geometry, CouplingConstant::default())?;
    let noise = NoiseConfig {
        photon_budget: budget,
        background_level: 0.0,
        rng_seed: 1,
    };
    let frame = normalize_magnified(&add_noise(&exact, &noise), Channel::Sum)?;

    let samples = WeightedSamples::from_density(&frame)?;
    let h = silverman_bandwidth(&samples)?;
    let eval = Grid::new(frame.grid.x_min(), frame.grid.x_max(), 4 * frame.grid.len())?;
    let kde = kde_estimate(&samples, h, eval)?;
    let spline = spline_fit(&samples, eval)?;

    println!("photon budget {budget:e}, Silverman h = {:.4} mm", h.value());
    println!("{:>8} {:>10} {:>10}", "", "L1", "TV");
    println!("{:>8} {:>10.4} {:>10.2}", "kde", l1(&kde, &truth), total_variation(&kde.values));
    println!("{:>8} {:>10.4} {:>10.2}", "spline", l1(&spline, &truth), total_variation(&spline.values));
    Ok(())
}
