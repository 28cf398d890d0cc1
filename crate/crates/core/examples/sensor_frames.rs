//! Forward model of the polarization-resolved camera: exact pixel counts,
//! shot noise, background subtraction, and the two normalizations.
//!
//! cargo run --release --example sensor_frames

use weaktraj::grid::{trapezoid, Grid};
use weaktraj::sensor::{
    add_noise, normalize_legacy, normalize_magnified, project_to_pixels, subtract_background, Channel, NoiseConfig,
    SensorGeometry,
};
use weaktraj::wavefield::{intensity, phase_gradient_slope, propagate_analytic, SlitConfig};
use weaktraj::weak_momentum::CouplingConstant;

fn main() -> weaktraj::error::Result<()> {
    let field = propagate_analytic(&SlitConfig::default(), Grid::symmetric(20.0, 4096)?, 5.0)?;
    let density = intensity(&field)?;
    let kxk = phase_gradient_slope(&field);
    let noise = NoiseConfig {
        photon_budget: 1e6,
        background_level: 5.0,
        rng_seed: 7,
    };

    for mag in [1.0, 2.0] {
        let geometry = SensorGeometry::new(26.0, mag, (1400.0 / mag) as usize)?;
        let exact = project_to_pixels(&density, &kxk, &geometry, CouplingConstant::default())?;
        let frame = subtract_background(&add_noise(&exact, &noise), noise.background_level)?;
        let good = normalize_magnified(&frame, Channel::Sum)?;
        let bad = normalize_legacy(&frame, Channel::Sum)?;
        println!(
            "magnification {mag}: pixel {:.3} mm, counts R {:.0} L {:.0}",
            geometry.pixel_mm(),
            frame.total(Channel::Right),
            frame.total(Channel::Left)
        );
        println!(
            "  integral of density: per-mm {:.4}, per-pixel {:.4}",
            trapezoid(&good.values, good.grid.spacing()),
            trapezoid(&bad.values, bad.grid.spacing())
        );
    }
    Ok(())
}
