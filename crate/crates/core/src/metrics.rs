//! Agreement between trajectory ensembles and congregation of final positions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensityCurve;
use crate::ensemble::TrajectoryEnsemble;
use crate::error::{Error, Result};

/// Reference mean per-pair correlation with spline smoothing; report
/// metadata only.
pub const REFERENCE_R_AVG_SPLINE: f64 = 0.53;
/// Same, with KDE smoothing.
pub const REFERENCE_R_AVG_KDE: f64 = 0.62;

/// Fewest final positions [`congregation_score`] accepts.
pub const MIN_CONGREGATION_POSITIONS: usize = 10;

/// Sample correlation of two trajectories over the planes where both are present.
pub fn pearson_r(a: &[Option<f64>], b: &[Option<f64>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!(
            "trajectories have {} and {} planes",
            a.len(),
            b.len()
        )));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .unzip();
    if xs.len() < 3 {
        return Err(Error::Degenerate(format!(
            "only {} common planes; correlation needs 3",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("constant trajectory; correlation undefined".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Which distance [`congregation_score`] reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CongregationStatistic {
    /// Kolmogorov–Smirnov distance between the empirical and density CDFs.
    #[default]
    Ks,
    /// Half the L1 distance between a position histogram on the density grid
    /// and the density's own cell masses (total variation distance).
    L1Histogram,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCounts {
    pub pairs_total: usize,
    pub pairs_skipped: usize,
    pub masked_points_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub r_avg_spline: f64,
    pub r_avg_kde: f64,
}

impl Default for Baselines {
    fn default() -> Self {
        Baselines {
            r_avg_spline: REFERENCE_R_AVG_SPLINE,
            r_avg_kde: REFERENCE_R_AVG_KDE,
        }
    }
}

/// Comparison of a reconstructed ensemble against a reference ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `None` where the pair was skipped.
    pub per_pair_r: Vec<Option<f64>>,
    pub r_avg: f64,
    /// Congregation of the first ensemble's final positions, when a density
    /// was supplied.
    pub congregation: Option<f64>,
    /// Congregation of the reference ensemble's final positions.
    pub reference_congregation: Option<f64>,
    pub statistic: CongregationStatistic,
    pub counts: ComparisonCounts,
    pub baselines: Baselines,
    pub labels: [String; 2],
}

/// Per-pair correlations, pairing trajectory `i` with trajectory `i`.
pub fn ensemble_mean_r(recon: &TrajectoryEnsemble, bohm: &TrajectoryEnsemble) -> Result<ComparisonReport> {
    if recon.n_trajectories() != bohm.n_trajectories() {
        return Err(Error::Argument(format!(
            "ensembles have {} and {} trajectories",
            recon.n_trajectories(),
            bohm.n_trajectories()
        )));
    }
    if recon.z_levels != bohm.z_levels {
        return Err(Error::Argument("ensembles are sampled on different z-planes".into()));
    }
    let per_pair_r: Vec<Option<f64>> = recon
        .rows
        .par_iter()
        .zip(&bohm.rows)
        .map(|(a, b)| pearson_r(a, b).ok())
        .collect();
    let valid: Vec<f64> = per_pair_r.iter().flatten().copied().collect();
    let r_avg = if valid.is_empty() {
        f64::NAN
    } else {
        valid.iter().sum::<f64>() / valid.len() as f64
    };
    let masked_points_dropped = recon
        .rows
        .iter()
        .zip(&bohm.rows)
        .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x.is_none() || y.is_none()).count())
        .sum();
    Ok(ComparisonReport {
        counts: ComparisonCounts {
            pairs_total: per_pair_r.len(),
            pairs_skipped: per_pair_r.len() - valid.len(),
            masked_points_dropped,
        },
        per_pair_r,
        r_avg,
        congregation: None,
        reference_congregation: None,
        statistic: CongregationStatistic::Ks,
        baselines: Baselines::default(),
        labels: [recon.label.clone(), bohm.label.clone()],
    })
}

/// Distance between final positions and a density: 0 means the positions
/// are distributed exactly like the density.
pub fn congregation_score(final_positions: &[f64], density: &DensityCurve) -> Result<f64> {
    congregation_score_with(final_positions, density, CongregationStatistic::Ks)
}

pub fn congregation_score_with(
    final_positions: &[f64],
    density: &DensityCurve,
    statistic: CongregationStatistic,
) -> Result<f64> {
    if final_positions.len() < MIN_CONGREGATION_POSITIONS {
        return Err(Error::Argument(format!(
            "congregation needs at least {MIN_CONGREGATION_POSITIONS} positions (got {})",
            final_positions.len()
        )));
    }
    if final_positions.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("final positions must be finite".into()));
    }
    let mut xs = final_positions.to_vec();
    xs.sort_by(f64::total_cmp);
    let nodes = density.cdf_nodes();
    let total = nodes[nodes.len() - 1];
    let n = xs.len() as f64;
    Ok(match statistic {
        CongregationStatistic::Ks => xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = density.cdf_at_with(&nodes, x) / total;
                (f - i as f64 / n).max((i + 1) as f64 / n - f)
            })
            .fold(0.0, f64::max),
        CongregationStatistic::L1Histogram => {
            let g = density.grid;
            let cells = g.len() - 1;
            let mut hist = vec![0.0; cells];
            let mut outside = 0.0;
            for &x in &xs {
                if g.contains(x) {
                    hist[g.interval(x)] += 1.0 / n;
                } else {
                    outside += 1.0 / n;
                }
            }
            let l1: f64 = (0..cells)
                .map(|k| (hist[k] - (nodes[k + 1] - nodes[k]) / total).abs())
                .sum();
            0.5 * (l1 + outside)
        }
    })
}

/// Adds congregation scores of both ensembles against `density`.
pub fn with_congregation(
    mut report: ComparisonReport,
    recon: &TrajectoryEnsemble,
    reference: &TrajectoryEnsemble,
    density: &DensityCurve,
    statistic: CongregationStatistic,
) -> Result<ComparisonReport> {
    report.congregation = Some(congregation_score_with(&recon.final_positions(), density, statistic)?);
    report.reference_congregation =
        Some(congregation_score_with(&reference.final_positions(), density, statistic)?);
    report.statistic = statistic;
    Ok(report)
}
