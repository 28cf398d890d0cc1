//! Three constructions of Bohm trajectories for a spreading Gaussian beam:
//! CDF transport, integration of the guidance slope, and a centroidal
//! Voronoi tessellation per plane. They should coincide.
//!
//! cargo run --release --example bohm_methods

use weaktraj::bohm::{cdf_transport_trajectories, cvt_trajectories, phase_trajectories, QuantileSeeds};
use weaktraj::density::DensityCurve;
use weaktraj::grid::Grid;
use weaktraj::wavefield::{intensity, propagate_analytic, SlitConfig};

fn main() -> weaktraj::error::Result<()> {
    let slit = SlitConfig::single_slit(0.3, 943.0);
    let grid = Grid::symmetric(4.0, 2048)?;
    let z: Vec<f64> = (0..51).map(|j| 0.02 * j as f64).collect();
    let fields = z
        .iter()
        .map(|&z| propagate_analytic(&slit, grid, z))
        .collect::<Result<Vec<_>, _>>()?;
    let densities = fields.iter().map(intensity).collect::<Result<Vec<DensityCurve>, _>>()?;

    let n = 11;
    let cvt = cvt_trajectories(&densities, n)?;
    let start: Vec<f64> = cvt.column(0).into_iter().flatten().collect();
    let seeds = QuantileSeeds::at_positions(&densities[0], start)?;
    let cdf = cdf_transport_trajectories(&densities, &seeds)?;
    let phase = phase_trajectories(&fields, &seeds)?;

    let last = z.len() - 1;
    println!("final plane z = {} m", z[last]);
    println!("{:>3} {:>10} {:>10} {:>10}", "i", "cdf", "phase", "cvt");
    for i in 0..n {
        let get = |e: &weaktraj::ensemble::TrajectoryEnsemble| e.rows[i][last].unwrap_or(f64::NAN);
        println!("{i:>3} {:>10.5} {:>10.5} {:>10.5}", get(&cdf), get(&phase), get(&cvt));
    }
    println!(
        "Lloyd iterations per plane: first {}, max {}",
        cvt.diagnostics.lloyd_iterations[0],
        cvt.diagnostics.lloyd_iterations.iter().max().unwrap()
    );
    Ok(())
}
