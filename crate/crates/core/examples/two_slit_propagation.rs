//! Propagates the two-slit field with the closed form and with the FFT
//! propagator, then prints the density and fringe spacing at a few planes.
//!
//! cargo run --release --example two_slit_propagation

use weaktraj::grid::Grid;
use weaktraj::wavefield::{intensity, make_two_slit_field, propagate_analytic, propagate_spectral, SlitConfig};

fn main() -> weaktraj::error::Result<()> {
    let slit = SlitConfig::default();
    let grid = Grid::symmetric(20.0, 4096)?;
    let source = make_two_slit_field(&slit, grid)?;

    println!("{:>6} {:>10} {:>12} {:>14}", "z_m", "width_mm", "fringe_mm", "max|diff|");
    for z in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let exact = intensity(&propagate_analytic(&slit, grid, z)?)?;
        let fft = intensity(&propagate_spectral(&source, z)?)?;
        let diff = exact
            .values
            .iter()
            .zip(&fft.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "{z:>6.2} {:>10.4} {:>12.4} {diff:>14.2e}",
            slit.width_at(z),
            slit.fringe_spacing(z)
        );
    }

    // coarse text plot of the far-field density
    let far = intensity(&propagate_analytic(&slit, grid, 8.0)?)?;
    let peak = far.peak();
    for x in (-24..=24).map(|i| i as f64 * 0.25) {
        let bar = (60.0 * far.value_at(x) / peak).round() as usize;
        println!("{x:>6.2} {}", "#".repeat(bar));
    }
    Ok(())
}
