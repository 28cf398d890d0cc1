//! Reference Bohm trajectories by three independent constructions.
//!
//! * [`cdf_transport_trajectories`]: each trajectory keeps its CDF quantile
//!   from plane to plane. In one transverse dimension this is exactly the
//!   probability-conserving Bohm flow.
//! * [`phase_trajectories`]: integrates the guidance slope obtained from the
//!   phase gradient of the propagated field.
//! * [`cvt_trajectories`]: follows the generators of a density-weighted
//!   centroidal Voronoi tessellation from plane to plane, with no equation of
//!   motion at all.
//!
//! [`measured_bohm_trajectories`] rebuilds the Bohm ensemble from measured
//! densities by Euler steps through slopes of quantile trajectories, in either the corrected or the legacy interpolation mode.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensityCurve;
use crate::ensemble::TrajectoryEnsemble;
use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::wavefield::{phase_gradient_slope, FieldSlice};
use crate::weak_momentum::{slope_from_kxk, UpdateMode};

const MM_PER_M: f64 = 1000.0;

/// Starting quantiles and their positions on the first plane.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileSeeds {
    pub quantiles: Vec<f64>,
    pub positions: Vec<f64>,
}

impl QuantileSeeds {
    pub fn new(quantiles: Vec<f64>, positions: Vec<f64>) -> Result<Self> {
        if quantiles.len() != positions.len() || quantiles.is_empty() {
            return Err(Error::Argument(
                "seeds need equal, nonzero numbers of quantiles and positions".into(),
            ));
        }
        if quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            return Err(Error::Argument("seed quantiles must lie in (0, 1)".into()));
        }
        if quantiles.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("seed quantiles must be strictly increasing".into()));
        }
        if positions.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument(
                "seed positions must be strictly increasing (coincident seeds are rejected)"
                    .into(),
            ));
        }
        Ok(QuantileSeeds {
            quantiles,
            positions,
        })
    }

    /// Seeds at explicit positions; quantiles are read off the density's CDF.
    pub fn at_positions(density: &DensityCurve, positions: Vec<f64>) -> Result<Self> {
        density.check_monotone_cdf()?;
        let nodes = density.cdf_nodes();
        let quantiles = positions
            .iter()
            .map(|&x| density.cdf_at_with(&nodes, x))
            .collect();
        QuantileSeeds::new(quantiles, positions)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// `n` seeds at quantiles `(i - 0.5)/n` of the density.
pub fn seed_quantiles(density: &DensityCurve, n: usize) -> Result<QuantileSeeds> {
    if n == 0 {
        return Err(Error::Argument("number of seeds must be >= 1".into()));
    }
    density.check_monotone_cdf()?;
    let quantiles: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let positions = density.quantiles(&quantiles);
    QuantileSeeds::new(quantiles, positions)
}

fn check_z_order(z: &[f64]) -> Result<()> {
    if z.len() < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 planes (got {})",
            z.len()
        )));
    }
    if z.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Argument("planes must be ordered by strictly increasing z".into()));
    }
    Ok(())
}

/// Trajectory `i` sits at quantile `q_i` of every plane's density.
pub fn cdf_transport_trajectories(
    densities: &[DensityCurve],
    seeds: &QuantileSeeds,
) -> Result<TrajectoryEnsemble> {
    let z: Vec<f64> = densities.iter().map(|d| d.z_m).collect();
    check_z_order(&z)?;
    for d in densities {
        d.check_monotone_cdf()?;
    }
    let columns: Vec<Vec<f64>> = densities
        .par_iter()
        .map(|d| d.quantiles(&seeds.quantiles))
        .collect();
    let rows = (0..seeds.len())
        .map(|i| columns.iter().map(|c| Some(c[i])).collect())
        .collect();
    TrajectoryEnsemble::new(z, rows, "bohm_cdf_transport")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Explicit midpoint; the mid-plane slope is the average of the two
    /// bracketing planes' slope fields at the predicted midpoint.
    #[default]
    Midpoint,
    /// Forward Euler using the slope at the current plane only.
    Euler,
}

/// Guidance-slope integration with the default midpoint integrator.
pub fn phase_trajectories(fields: &[FieldSlice], seeds: &QuantileSeeds) -> Result<TrajectoryEnsemble> {
    phase_trajectories_with(fields, seeds, Integrator::Midpoint)
}

pub fn phase_trajectories_with(
    fields: &[FieldSlice],
    seeds: &QuantileSeeds,
    integrator: Integrator,
) -> Result<TrajectoryEnsemble> {
    let z: Vec<f64> = fields.iter().map(|f| f.z_m).collect();
    check_z_order(&z)?;
    let slopes: Vec<MonotoneCubic> = fields
        .par_iter()
        .map(|f| slope_from_kxk(&phase_gradient_slope(f), UpdateMode::Corrected)?.interpolator())
        .collect::<Result<_>>()?;

    let grid = fields[0].grid;
    let limit = grid.span() / 10.0;
    let (lo, hi) = (grid.x_min(), grid.x_max());

    let results: Vec<(Vec<Option<f64>>, bool)> = seeds
        .positions
        .par_iter()
        .map(|&x0| -> Result<(Vec<Option<f64>>, bool)> {
            let mut row = Vec::with_capacity(z.len());
            row.push(Some(x0));
            let mut x = x0;
            let mut truncated = false;
            for j in 1..z.len() {
                if truncated {
                    row.push(None);
                    continue;
                }
                let dz = (z[j] - z[j - 1]) * MM_PER_M;
                let s0 = slopes[j - 1].eval(x);
                if (s0 * dz).abs() >= limit {
                    return Err(Error::Numerical(format!(
                        "step {j}: |slope|*dz = {} mm exceeds a tenth of the grid span; refine the z schedule",
                        (s0 * dz).abs()
                    )));
                }
                let next = match integrator {
                    Integrator::Euler => x + dz * s0,
                    Integrator::Midpoint => {
                        let xm = x + 0.5 * dz * s0;
                        let sm = 0.5 * (slopes[j - 1].eval(xm) + slopes[j].eval(xm));
                        x + dz * sm
                    }
                };
                if next < lo || next > hi {
                    truncated = true;
                    row.push(None);
                } else {
                    x = next;
                    row.push(Some(x));
                }
            }
            Ok((row, truncated))
        })
        .collect::<Result<_>>()?;

    let truncated: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.1)
        .map(|(i, _)| i)
        .collect();
    let rows = results.into_iter().map(|r| r.0).collect();
    let mut ens = TrajectoryEnsemble::new(z, rows, "bohm_phase")?;
    ens.diagnostics.truncated = truncated;
    Ok(ens)
}

/// Options for [`cvt_trajectories_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvtOptions {
    /// The tessellation is weighted by `density^exponent`.
    pub density_exponent: f64,
    /// Stop when the largest generator move falls below this fraction of
    /// the grid span.
    pub relative_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for CvtOptions {
    fn default() -> Self {
        CvtOptions {
            density_exponent: 1.0,
            relative_tolerance: 1e-10,
            max_iterations: 10_000,
        }
    }
}

/// Cumulative zeroth, first and second moments of a piecewise-linear weight.
#[derive(Debug, Clone)]
pub struct WeightTable {
    xs: Vec<f64>,
    w: Vec<f64>,
    cum: Vec<[f64; 3]>,
}

impl WeightTable {
    pub fn new(density: &DensityCurve, exponent: f64) -> Self {
        let xs = density.xs();
        let w: Vec<f64> = density.values.iter().map(|v| v.max(0.0).powf(exponent)).collect();
        let mut cum = Vec::with_capacity(xs.len());
        let mut acc = [0.0; 3];
        cum.push(acc);
        for k in 0..xs.len() - 1 {
            let m = segment_moments(xs[k], w[k], (w[k + 1] - w[k]) / (xs[k + 1] - xs[k]), xs[k + 1] - xs[k]);
            for p in 0..3 {
                acc[p] += m[p];
            }
            cum.push(acc);
        }
        WeightTable { xs, w, cum }
    }

    fn span(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    /// Moments of the weight over `(-inf, x]`, clamped to the grid.
    fn cumulative(&self, x: f64) -> [f64; 3] {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return [0.0; 3];
        }
        if x >= self.xs[n - 1] {
            return self.cum[n - 1];
        }
        let k = self.xs.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
        let h = self.xs[k + 1] - self.xs[k];
        let m = segment_moments(self.xs[k], self.w[k], (self.w[k + 1] - self.w[k]) / h, x - self.xs[k]);
        let c = self.cum[k];
        [c[0] + m[0], c[1] + m[1], c[2] + m[2]]
    }

    fn cell(&self, a: f64, b: f64) -> [f64; 3] {
        let (ca, cb) = (self.cumulative(a), self.cumulative(b));
        [cb[0] - ca[0], cb[1] - ca[1], cb[2] - ca[2]]
    }

    /// `∫_a^b (x - g)² w(x) dx`, accumulated segment by segment in local
    /// coordinates to avoid cancellation.
    fn cell_energy(&self, a: f64, b: f64, g: f64) -> f64 {
        let n = self.xs.len();
        let (lo, hi) = (a.max(self.xs[0]), b.min(self.xs[n - 1]));
        if hi <= lo {
            return 0.0;
        }
        let mut k = self.xs.partition_point(|&v| v <= lo).clamp(1, n - 1) - 1;
        let mut e = 0.0;
        let mut left = lo;
        while k < n - 1 && left < hi {
            let right = self.xs[k + 1].min(hi);
            let h = self.xs[k + 1] - self.xs[k];
            let slope = (self.w[k + 1] - self.w[k]) / h;
            let w_left = self.w[k] + slope * (left - self.xs[k]);
            // shift so the segment starts at `left`, moments about g
            let m = segment_moments(left - g, w_left, slope, right - left);
            e += m[2];
            left = right;
            k += 1;
        }
        e
    }
}

/// Moments `∫_0^τ (x0+t)^p (w0 + s t) dt` for `p = 0, 1, 2`.
fn segment_moments(x0: f64, w0: f64, s: f64, tau: f64) -> [f64; 3] {
    let t1 = tau;
    let t2 = tau * tau / 2.0;
    let t3 = tau * tau * tau / 3.0;
    let t4 = tau * tau * tau * tau / 4.0;
    // ∫ t^j (w0 + s t)
    let i0 = w0 * t1 + s * t2;
    let i1 = w0 * t2 + s * t3;
    let i2 = w0 * t3 + s * t4;
    [i0, x0 * i0 + i1, x0 * x0 * i0 + 2.0 * x0 * i1 + i2]
}

fn cell_bounds(table: &WeightTable, generators: &[f64]) -> Vec<f64> {
    let (lo, hi) = table.span();
    let mut b = Vec::with_capacity(generators.len() + 1);
    b.push(lo);
    b.extend(generators.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    b.push(hi);
    b
}

/// One Lloyd update: every generator moves to its cell's weighted centroid.
pub fn lloyd_step(table: &WeightTable, generators: &[f64]) -> Vec<f64> {
    let b = cell_bounds(table, generators);
    (0..generators.len())
        .map(|i| {
            let m = table.cell(b[i], b[i + 1]);
            if m[0] > 0.0 {
                m[1] / m[0]
            } else {
                0.5 * (b[i] + b[i + 1])
            }
        })
        .collect()
}

/// Quantization energy `Σ_i ∫_{cell i} (x - g_i)² w(x) dx`.
pub fn lloyd_energy(table: &WeightTable, generators: &[f64]) -> f64 {
    let b = cell_bounds(table, generators);
    generators
        .iter()
        .enumerate()
        .map(|(i, &g)| table.cell_energy(b[i], b[i + 1], g))
        .sum()
}

/// Result of converging one plane.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub generators: Vec<f64>,
    pub iterations: usize,
    pub last_move: f64,
}

/// Iterates Lloyd steps from `initial` until the largest move is below
/// `relative_tolerance * span`.
pub fn lloyd_converge(
    density: &DensityCurve,
    initial: &[f64],
    options: &CvtOptions,
    plane: usize,
) -> Result<LloydRun> {
    let table = WeightTable::new(density, options.density_exponent);
    let tol = options.relative_tolerance * density.grid.span();
    let mut g = initial.to_vec();
    let mut last_move = f64::INFINITY;
    for it in 1..=options.max_iterations {
        let next = lloyd_step(&table, &g);
        last_move = next
            .iter()
            .zip(&g)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        g = next;
        if last_move < tol {
            return Ok(LloydRun {
                generators: g,
                iterations: it,
                last_move,
            });
        }
    }
    Err(Error::LloydNonConvergence {
        plane,
        iterations: options.max_iterations,
        max_move: last_move,
        tolerance: tol,
    })
}

/// CVT trajectories with default options.
pub fn cvt_trajectories(densities: &[DensityCurve], n: usize) -> Result<TrajectoryEnsemble> {
    cvt_trajectories_with(densities, n, &CvtOptions::default())
}

/// Converges a CVT of `n` generators on each plane, warm-starting from the
/// previous plane. The first plane starts from the density quantiles.
pub fn cvt_trajectories_with(
    densities: &[DensityCurve],
    n: usize,
    options: &CvtOptions,
) -> Result<TrajectoryEnsemble> {
    if n == 0 {
        return Err(Error::Argument("number of generators must be >= 1".into()));
    }
    let z: Vec<f64> = densities.iter().map(|d| d.z_m).collect();
    check_z_order(&z)?;
    for d in densities {
        d.check_monotone_cdf()?;
    }
    let mut g = seed_quantiles(&densities[0], n)?.positions;
    let mut columns = Vec::with_capacity(densities.len());
    let mut iterations = Vec::with_capacity(densities.len());
    for (j, d) in densities.iter().enumerate() {
        let run = lloyd_converge(d, &g, options, j)?;
        iterations.push(run.iterations);
        g = run.generators;
        columns.push(g.clone());
    }
    let rows = (0..n)
        .map(|i| columns.iter().map(|c| Some(c[i])).collect())
        .collect();
    let mut ens = TrajectoryEnsemble::new(z, rows, "bohm_cvt")?;
    ens.diagnostics.lloyd_iterations = iterations;
    Ok(ens)
}

/// Which positions the Bohm slope field is interpolated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BohmInterp {
    /// At the Bohm ensemble's own positions.
    #[serde(rename = "corrected_cdfxWise", alias = "corrected")]
    CorrectedCdfxWise,
    /// At the photon ensemble's positions (legacy behaviour).
    #[serde(rename = "legacy_cdfx", alias = "legacy")]
    LegacyCdfx,
}

/// Number of quantile trajectories that sample the Bohm slope field.
pub const SLOPE_FIELD_QUANTILES: usize = 1000;

/// Bohm trajectories built by Euler steps through the slopes of
/// probability-conserving trajectories.
///
/// At each plane `j` a fine set of quantile trajectories gives slopes
/// `(x_{j+1}(q) - x_j(q)) / Δz` at positions `x_j(q)`. Each seed then moves by
/// `Δz` times that slope field interpolated at its own position
/// ([`BohmInterp::CorrectedCdfxWise`]) or at the matching photon position
/// ([`BohmInterp::LegacyCdfx`], which needs `photons`).
pub fn measured_bohm_trajectories(
    densities: &[DensityCurve],
    seeds: &QuantileSeeds,
    interp: BohmInterp,
    photons: Option<&TrajectoryEnsemble>,
) -> Result<TrajectoryEnsemble> {
    let z: Vec<f64> = densities.iter().map(|d| d.z_m).collect();
    check_z_order(&z)?;
    if interp == BohmInterp::LegacyCdfx {
        match photons {
            None => {
                return Err(Error::Argument(
                    "legacy_cdfx interpolation needs the photon ensemble".into(),
                ))
            }
            Some(p) if p.n_trajectories() != seeds.len() || p.z_levels != z => {
                return Err(Error::Argument(
                    "photon ensemble must match the seeds and z-planes".into(),
                ))
            }
            _ => {}
        }
    }
    for d in densities {
        d.check_monotone_cdf()?;
    }
    let fine: Vec<f64> = (0..SLOPE_FIELD_QUANTILES)
        .map(|i| (i as f64 + 0.5) / SLOPE_FIELD_QUANTILES as f64)
        .collect();
    let levels: Vec<Vec<f64>> = densities.par_iter().map(|d| d.quantiles(&fine)).collect();
    let fields: Vec<MonotoneCubic> = (0..z.len() - 1)
        .map(|j| {
            let dz = (z[j + 1] - z[j]) * MM_PER_M;
            let (xs, ss): (Vec<f64>, Vec<f64>) = levels[j]
                .iter()
                .zip(&levels[j + 1])
                .map(|(a, b)| (*a, (b - a) / dz))
                .unzip();
            dedup_nodes(xs, ss)
        })
        .collect::<Result<_>>()?;

    let rows: Vec<Vec<Option<f64>>> = (0..seeds.len())
        .map(|i| {
            let mut row = Vec::with_capacity(z.len());
            let mut x = seeds.positions[i];
            row.push(Some(x));
            for j in 0..z.len() - 1 {
                let dz = (z[j + 1] - z[j]) * MM_PER_M;
                let query = match interp {
                    BohmInterp::CorrectedCdfxWise => Some(x),
                    BohmInterp::LegacyCdfx => photons.and_then(|p| p.rows[i][j]),
                };
                let s = query.map(|q| fields[j].eval(q)).unwrap_or(0.0);
                x += dz * s;
                row.push(Some(x));
            }
            row
        })
        .collect();
    let label = match interp {
        BohmInterp::CorrectedCdfxWise => "bohm_measured_cdfxwise",
        BohmInterp::LegacyCdfx => "bohm_measured_legacy_cdfx",
    };
    TrajectoryEnsemble::new(z, rows, label)
}

/// Drops repeated abscissae (quantiles clamped onto one grid end).
fn dedup_nodes(xs: Vec<f64>, ys: Vec<f64>) -> Result<MonotoneCubic> {
    let mut px = Vec::with_capacity(xs.len());
    let mut py = Vec::with_capacity(ys.len());
    for (x, y) in xs.into_iter().zip(ys) {
        if px.last().map_or(true, |&l| x > l) {
            px.push(x);
            py.push(y);
        }
    }
    MonotoneCubic::new(px, py, 0.0)
}
