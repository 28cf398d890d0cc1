//! End to end: synthesize noisy frames, reconstruct average photon
//! trajectories in several pipeline modes and score them against the exact
//! Bohm trajectories.
//!
//! cargo run --release --example reconstruct_pipeline [seed]

use weaktraj::config::RunConfig;
use weaktraj::metrics::{congregation_score, ensemble_mean_r};
use weaktraj::reconstruction::{reconstruct_from_frames, PipelineMode};
use weaktraj::synthetic::synthesize;

fn main() -> weaktraj::error::Result<()> {
    let mut cfg = RunConfig::standard();
    if let Some(seed) = std::env::args().nth(1).and_then(|s| s.parse().ok()) {
        cfg.sensor.noise.rng_seed = seed;
    }
    let data = synthesize(&cfg)?;
    println!(
        "{} planes, {} trajectories, {:e} photons per frame",
        cfg.z_schedule.len(),
        cfg.n_trajectories,
        cfg.sensor.noise.photon_budget
    );

    let truth_score = congregation_score(&data.ground_truth.final_positions(), data.final_density())?;
    println!("{:<28} {:>8} {:>13}", "mode", "r_avg", "congregation");
    println!("{:<28} {:>8} {truth_score:>13.4}", "exact Bohm", "");
    for tag in ["corrected", "custom:smoothing=spline", "legacy"] {
        let mode: PipelineMode = tag.parse()?;
        let rec = reconstruct_from_frames(
            &data.frames,
            cfg.sensor.noise.background_level,
            cfg.coupling()?,
            &mode,
            cfg.n_trajectories,
        )?;
        let r = ensemble_mean_r(&rec.photons, &data.ground_truth)?;
        let c = congregation_score(&rec.photons.final_positions(), data.final_density())?;
        println!("{tag:<28} {:>8.4} {c:>13.4}", r.r_avg);
    }
    Ok(())
}
