//! Run configuration, its canonical hash, and run manifests.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::reconstruction::PipelineMode;
use crate::sensor::{NoiseConfig, SensorGeometry, REFERENCE_PITCH_UM};
use crate::wavefield::SlitConfig;
use crate::weak_momentum::{CouplingConstant, REFERENCE_ZETA};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_ENV: &str = "WEAKTRAJ_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl GridSpec {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.x_min, self.x_max, self.n_points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub pitch_um: f64,
    /// One value for every plane, or one per plane.
    pub magnifications: Vec<f64>,
    pub n_pixels: usize,
    pub noise: NoiseConfig,
    /// Write expected counts instead of Poisson draws.
    #[serde(default)]
    pub noiseless: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub slit: SlitConfig,
    pub grid: GridSpec,
    pub z_schedule: Vec<f64>,
    pub sensor: SensorConfig,
    pub zeta: f64,
    /// `corrected`, `legacy` or `custom:field=value,...`.
    pub mode: String,
    pub n_trajectories: usize,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// The two-slit set-up used throughout the examples and acceptance tests:
    /// 41 planes from 2 to 8 m, 80 trajectories, 1e6 photons per frame.
    pub fn standard() -> Self {
        let z_schedule = (0..41).map(|j| 2.0 + 0.15 * j as f64).collect();
        RunConfig {
            schema_version: SCHEMA_VERSION,
            slit: SlitConfig::default(),
            grid: GridSpec {
                x_min: -20.0,
                x_max: 20.0,
                n_points: 4096,
            },
            z_schedule,
            sensor: SensorConfig {
                pitch_um: REFERENCE_PITCH_UM,
                magnifications: vec![1.0],
                n_pixels: 1400,
                noise: NoiseConfig {
                    photon_budget: 1e6,
                    background_level: 5.0,
                    rng_seed: 1,
                },
                noiseless: false,
            },
            zeta: REFERENCE_ZETA,
            mode: "corrected".into(),
            n_trajectories: 80,
            output_dir: PathBuf::from("weaktraj-out"),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Validation(vec![format!("{}: {e}", path.display())]))?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Every violated invariant, each naming its field.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            v.push(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }
        v.extend(self.slit.violations().into_iter().map(|m| format!("slit: {m}")));
        if let Err(e) = self.grid.grid() {
            v.push(format!("grid: {e}"));
        }
        if self.z_schedule.len() < 2 {
            v.push(format!(
                "z_schedule: needs at least 2 planes (got {})",
                self.z_schedule.len()
            ));
        }
        if self.z_schedule.iter().any(|z| !(z.is_finite() && *z >= 0.0)) {
            v.push("z_schedule: planes must be finite and >= 0".into());
        }
        if self.z_schedule.windows(2).any(|w| !(w[1] > w[0])) {
            v.push("z_schedule: must be strictly increasing".into());
        }
        let s = &self.sensor;
        if !(s.pitch_um > 0.0) {
            v.push(format!("sensor.pitch_um: must be > 0 (got {})", s.pitch_um));
        }
        if s.n_pixels < 4 {
            v.push(format!("sensor.n_pixels: must be >= 4 (got {})", s.n_pixels));
        }
        let m = s.magnifications.len();
        if !(m == 1 || m == self.z_schedule.len()) {
            v.push(format!(
                "sensor.magnifications: need 1 or {} values (got {m})",
                self.z_schedule.len()
            ));
        }
        if s.magnifications.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            v.push("sensor.magnifications: must be > 0".into());
        }
        v.extend(s.noise.violations().into_iter().map(|m| format!("sensor.noise: {m}")));
        if let Err(e) = CouplingConstant::new(self.zeta) {
            v.push(format!("zeta: {e}"));
        }
        if let Err(e) = self.mode.parse::<PipelineMode>() {
            v.push(format!("mode: {e}"));
        }
        if self.n_trajectories < 1 {
            v.push("n_trajectories: must be >= 1".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn pipeline_mode(&self) -> Result<PipelineMode> {
        self.mode.parse()
    }

    pub fn coupling(&self) -> Result<CouplingConstant> {
        CouplingConstant::new(self.zeta)
    }

    pub fn geometry(&self, plane: usize) -> SensorGeometry {
        let m = &self.sensor.magnifications;
        SensorGeometry {
            pitch_um: self.sensor.pitch_um,
            magnification: if m.len() == 1 { m[0] } else { m[plane] },
            n_pixels: self.sensor.n_pixels,
            center_mm: 0.0,
        }
    }

    /// Hex SHA-256 of the canonical JSON of the configuration.
    ///
    /// `output_dir` and `mode` are left out: moving a run or reconstructing
    /// the same frames in another mode does not change the data.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let serde_json::Value::Object(map) = &mut value {
            map.remove("output_dir");
            map.remove("mode");
        }
        // serde_json maps are ordered by key, so this text is canonical
        let text = value.to_string();
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// `WEAKTRAJ_OUT` if set, else `output_dir`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ENV) {
            Some(p) if !p.is_empty() => PathBuf::from(p),
            _ => self.output_dir.clone(),
        }
    }
}

/// Written next to every stage's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub config_hash: String,
    pub toolkit_version: String,
    pub mode: Option<String>,
    pub files: Vec<String>,
    pub diagnostics: serde_json::Value,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(stage: &str, config_hash: &str, started_unix_s: u64) -> Self {
        RunManifest {
            stage: stage.into(),
            config_hash: config_hash.into(),
            toolkit_version: env!("CARGO_PKG_VERSION").into(),
            mode: None,
            files: Vec::new(),
            diagnostics: serde_json::Value::Null,
            started_unix_s,
            finished_unix_s: started_unix_s,
        }
    }

    pub fn write(mut self, path: &Path) -> Result<()> {
        self.finished_unix_s = unix_now();
        let text = serde_json::to_string_pretty(&self).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
