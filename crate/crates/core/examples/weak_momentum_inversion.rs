//! Recovers the transverse momentum from the right/left intensity asymmetry
//! and compares it with the field's phase gradient.
//!
//! cargo run --release --example weak_momentum_inversion

use weaktraj::grid::Grid;
use weaktraj::sensor::{normalize_magnified, project_to_pixels, Channel, SensorGeometry};
use weaktraj::wavefield::{intensity, phase_gradient_slope, propagate_analytic, SlitConfig};
use weaktraj::weak_momentum::{infer_kx_over_k, slope_from_kxk, CouplingConstant, MomentumMode, UpdateMode};

fn main() -> weaktraj::error::Result<()> {
    let field = propagate_analytic(&SlitConfig::default(), Grid::symmetric(20.0, 4096)?, 4.0)?;
    let truth = phase_gradient_slope(&field);
    let zeta = CouplingConstant::default();
    let img = project_to_pixels(&intensity(&field)?, &truth, &SensorGeometry::new(26.0, 1.0, 1400)?, zeta)?;
    let right = normalize_magnified(&img, Channel::Right)?;
    let left = normalize_magnified(&img, Channel::Left)?;

    let reference = truth.interpolator()?;
    for mode in [MomentumMode::Corrected, MomentumMode::LegacyTan] {
        let kxk = infer_kx_over_k(&right, &left, zeta, mode)?;
        let worst = (0..kxk.len())
            .filter(|&i| kxk.valid[i])
            .map(|i| (kxk.values[i] - reference.eval(kxk.xs[i])).abs())
            .fold(0.0, f64::max);
        println!("{mode:?}: {} usable pixels, worst error {worst:.3e}", kxk.valid_count());
    }

    let kxk = infer_kx_over_k(&right, &left, zeta, MomentumMode::Corrected)?;
    let slope = slope_from_kxk(&kxk, UpdateMode::Corrected)?;
    println!("{:>8} {:>12} {:>12}", "x_mm", "k_x/|k|", "dx/dz");
    for i in (0..kxk.len()).step_by(100).filter(|&i| kxk.valid[i]) {
        println!("{:>8.3} {:>12.4e} {:>12.4e}", kxk.xs[i], kxk.values[i], slope.values[i]);
    }
    Ok(())
}
