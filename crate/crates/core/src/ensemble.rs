use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-ensemble bookkeeping carried into manifests and reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDiagnostics {
    /// Trajectories that left the sampled window and were masked from there on.
    pub truncated: Vec<usize>,
    /// Trajectories that entered the zero-slope fill region outside the
    /// unmasked samples at some plane.
    pub drifted_outside: Vec<usize>,
    /// Lloyd iterations per plane, for CVT ensembles.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lloyd_iterations: Vec<usize>,
}

/// `N` trajectories sampled on `M` shared z-planes.
///
/// Row `i` is trajectory `i`; `None` marks a masked entry (after truncation).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub z_levels: Vec<f64>,
    pub rows: Vec<Vec<Option<f64>>>,
    pub label: String,
    pub diagnostics: EnsembleDiagnostics,
}

impl TrajectoryEnsemble {
    pub fn new(z_levels: Vec<f64>, rows: Vec<Vec<Option<f64>>>, label: impl Into<String>) -> Result<Self> {
        if z_levels.len() < 2 {
            return Err(Error::Argument(format!(
                "an ensemble needs at least 2 z-planes (got {})",
                z_levels.len()
            )));
        }
        if z_levels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("z_levels must be strictly increasing".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != z_levels.len() {
                return Err(Error::Argument(format!(
                    "trajectory {i} has {} entries for {} planes",
                    row.len(),
                    z_levels.len()
                )));
            }
            if row.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!("trajectory {i} has a non-finite entry")));
            }
        }
        Ok(TrajectoryEnsemble {
            z_levels,
            rows,
            label: label.into(),
            diagnostics: EnsembleDiagnostics::default(),
        })
    }

    pub fn n_trajectories(&self) -> usize {
        self.rows.len()
    }

    pub fn n_planes(&self) -> usize {
        self.z_levels.len()
    }

    pub fn column(&self, j: usize) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Final-plane positions of the trajectories that reached it.
    pub fn final_positions(&self) -> Vec<f64> {
        let j = self.n_planes() - 1;
        self.rows.iter().filter_map(|r| r[j]).collect()
    }

    pub fn masked_entries(&self) -> usize {
        self.rows.iter().flatten().filter(|x| x.is_none()).count()
    }

    /// Whether every plane has its present entries in strictly increasing row order.
    pub fn is_non_crossing(&self) -> bool {
        (0..self.n_planes()).all(|j| {
            let col: Vec<f64> = self.rows.iter().filter_map(|r| r[j]).collect();
            col.windows(2).all(|w| w[0] < w[1])
        })
    }
}
