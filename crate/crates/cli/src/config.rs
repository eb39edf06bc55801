//! Run configuration: JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lvssm_core::Fnv1a;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcpSettings {
    pub iterations: usize,
    pub burnin: usize,
    pub p0: f64,
    pub w0: f64,
    pub prob_floor: f64,
    /// Rare-event threshold multiplier on the series standard deviation.
    pub threshold_k: f64,
}

impl Default for BcpSettings {
    fn default() -> Self {
        BcpSettings {
            iterations: 500,
            burnin: 50,
            p0: 0.2,
            w0: 0.2,
            prob_floor: 0.5,
            threshold_k: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GteSettings {
    pub window_s: f64,
    pub step_s: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl Default for GteSettings {
    fn default() -> Self {
        GteSettings {
            window_s: 60.0,
            step_s: 1.0,
            grid_rows: 4,
            grid_cols: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RollingSettings {
    pub window_s: f64,
    pub step_s: f64,
    pub warm_start: bool,
}

impl Default for RollingSettings {
    fn default() -> Self {
        RollingSettings {
            window_s: 1800.0,
            step_s: 60.0,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WccSettings {
    pub window: usize,
    pub window_inc: usize,
    pub max_lag: usize,
    pub lag_inc: usize,
}

impl Default for WccSettings {
    fn default() -> Self {
        WccSettings {
            window: 30,
            window_inc: 1,
            max_lag: 10,
            lag_inc: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    pub max_iter: usize,
    pub tol: f64,
    pub refine: bool,
    pub starts: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            max_iter: 500,
            tol: 1e-6,
            refine: false,
            starts: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSettings {
    pub min_len_s: f64,
}

impl Default for SegmentSettings {
    fn default() -> Self {
        SegmentSettings { min_len_s: 300.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    pub duration_s: usize,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        SimulateSettings { duration_s: 7200 }
    }
}

/// Full run configuration. Every output carries the hash of the exact
/// configuration that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory with the raw sensor CSVs (hr.csv, gaze.csv, aus.csv,
    /// imu.csv, objects.csv).
    pub data_dir: PathBuf,
    /// Output directory; also where features.csv is looked up.
    pub out_dir: PathBuf,
    /// Session identifier for cross-participant tables.
    pub participant: String,
    /// Builtin model name (`base` | `two_latent`) or a path to a model
    /// spec JSON file.
    pub model: String,
    /// Timestep restructuring stride in seconds.
    pub stride: usize,
    pub seed: u64,
    /// Worker threads (0 = number of cores).
    pub workers: usize,
    pub bcp: BcpSettings,
    pub gte: GteSettings,
    pub rolling: RollingSettings,
    pub wcc: WccSettings,
    pub fit: FitSettings,
    pub segments: SegmentSettings,
    pub simulate: SimulateSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            participant: "p1".into(),
            model: "two_latent".into(),
            stride: 10,
            seed: 0,
            workers: 0,
            bcp: BcpSettings::default(),
            gte: GteSettings::default(),
            rolling: RollingSettings::default(),
            wcc: WccSettings::default(),
            fit: FitSettings::default(),
            segments: SegmentSettings::default(),
            simulate: SimulateSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }

    /// Stable hash of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h = Fnv1a::new();
        h.write(json.as_bytes());
        format!("{:016x}", h.finish())
    }
}
