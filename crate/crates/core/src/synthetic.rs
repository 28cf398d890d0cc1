//! Synthetic two-slit datasets: frames plus the ground-truth Bohm ensemble.

use rayon::prelude::*;

use crate::bohm::{cdf_transport_trajectories, seed_quantiles};
use crate::config::RunConfig;
use crate::density::DensityCurve;
use crate::ensemble::TrajectoryEnsemble;
use crate::error::Result;
use crate::sensor::{add_noise, expected_counts, project_to_pixels, PixelImage};
use crate::wavefield::{intensity, phase_gradient_slope, propagate_analytic};

/// Noiseless projection of one plane, before photon scaling.
#[derive(Debug, Clone)]
pub struct PlaneTruth {
    pub density: DensityCurve,
    /// Pixel probabilities (sum to one across both channels).
    pub projection: PixelImage,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub frames: Vec<PixelImage>,
    pub truth: Vec<PlaneTruth>,
    pub ground_truth: TrajectoryEnsemble,
}

impl Dataset {
    pub fn densities(&self) -> Vec<DensityCurve> {
        self.truth.iter().map(|t| t.density.clone()).collect()
    }

    pub fn final_density(&self) -> &DensityCurve {
        &self.truth[self.truth.len() - 1].density
    }
}

/// Exact densities and pixel projections for every plane of `cfg`.
pub fn plane_truths(cfg: &RunConfig) -> Result<Vec<PlaneTruth>> {
    cfg.validate()?;
    let grid = cfg.grid.grid()?;
    let zeta = cfg.coupling()?;
    cfg.z_schedule
        .par_iter()
        .enumerate()
        .map(|(j, &z)| {
            let field = propagate_analytic(&cfg.slit, grid, z)?;
            let density = intensity(&field)?;
            let kxk = phase_gradient_slope(&field);
            let projection = project_to_pixels(&density, &kxk, &cfg.geometry(j), zeta)?;
            Ok(PlaneTruth {
                density,
                projection,
            })
        })
        .collect()
}

/// Frames at the configured photon budget from precomputed projections.
///
/// Plane `j` draws from the stream seeded with `rng_seed ^ j`, so frames are
/// reproducible regardless of evaluation order.
pub fn frames_from_truth(cfg: &RunConfig, truth: &[PlaneTruth]) -> Vec<PixelImage> {
    let noise = cfg.sensor.noise;
    truth
        .par_iter()
        .enumerate()
        .map(|(j, t)| {
            if cfg.sensor.noiseless {
                expected_counts(&t.projection, &noise)
            } else {
                add_noise(&t.projection, &noise.for_plane(j))
            }
        })
        .collect()
}

/// Ground truth: probability-conserving trajectories through the exact
/// densities, seeded at quantiles `(i + 1/2)/n` of the first plane.
pub fn ground_truth(cfg: &RunConfig, densities: &[DensityCurve]) -> Result<TrajectoryEnsemble> {
    let seeds = seed_quantiles(&densities[0], cfg.n_trajectories)?;
    let mut ens = cdf_transport_trajectories(densities, &seeds)?;
    ens.label = "ground_truth".into();
    Ok(ens)
}

pub fn synthesize(cfg: &RunConfig) -> Result<Dataset> {
    let truth = plane_truths(cfg)?;
    let frames = frames_from_truth(cfg, &truth);
    let densities: Vec<DensityCurve> = truth.iter().map(|t| t.density.clone()).collect();
    let ground_truth = ground_truth(cfg, &densities)?;
    Ok(Dataset {
        frames,
        truth,
        ground_truth,
    })
}
