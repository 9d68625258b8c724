//! Run configuration: a TOML file whose every key has an explicit default.

use std::path::{Path, PathBuf};

use qmem_core::{ConvergeOptions, Direction, DrivePolicy, EngineSettings, ModelParams, Resolution};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Directions {
    Forward,
    Backward,
    Both,
}

impl Directions {
    pub fn list(self) -> Vec<Direction> {
        match self {
            Directions::Forward => vec![Direction::Forward],
            Directions::Backward => vec![Direction::Backward],
            Directions::Both => Direction::BOTH.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Threshold for counted modes.
    pub eta_min: f64,
    pub direction: Directions,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub out_dir: PathBuf,
    /// Persist block spectra under `cache_dir`.
    pub cache: bool,
    pub cache_dir: PathBuf,
    pub params: ModelParams,
    pub resolution: Resolution,
    pub engine: EngineSettings,
    pub sweep: SweepConfig,
    pub oracle: OracleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            eta_min: 0.5,
            direction: Directions::Both,
            jobs: 0,
            out_dir: PathBuf::from("qmem-out"),
            cache: true,
            cache_dir: PathBuf::from(".qmem-cache"),
            params: ModelParams::new(40.0, 1.0).expect("valid defaults"),
            resolution: Resolution::default(),
            engine: EngineSettings::default(),
            sweep: SweepConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Used by `sweep-fresnel`, at depth `params.depth`.
    pub fresnel_values: Vec<f64>,
    /// Used by `sweep-depth`, at Fresnel number `params.fresnel`.
    pub depth_values: Vec<f64>,
    /// Refine every point with `refine` before reporting.
    pub converge: bool,
    pub refine: ConvergeOptions,
    pub drive: DrivePolicy,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            fresnel_values: vec![0.25, 0.5, 1.0, 2.0],
            depth_values: vec![20.0, 40.0, 70.0, 100.0],
            converge: true,
            refine: ConvergeOptions::default(),
            drive: DrivePolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleInstance {
    pub depth: f64,
    /// `"inf"` disables diffraction.
    #[serde(with = "qmem_core::params::fresnel_serde")]
    pub fresnel: f64,
    pub n_radial_max: usize,
    #[serde(default)]
    pub m: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub axial_nodes: usize,
    pub steps_per_rate: f64,
    /// Combine this grid with one twice as fine.
    pub extrapolate: bool,
    pub tolerance: f64,
    /// Frequency nodes of the kernel pipeline being checked.
    pub n_freq: usize,
    pub instances: Vec<OracleInstance>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        let mut instances = Vec::new();
        for (depth, n_radial_max) in [(10.0, 2), (30.0, 3)] {
            for fresnel in [0.5, 1.0, f64::INFINITY] {
                instances.push(OracleInstance { depth, fresnel, n_radial_max, m: 0 });
            }
        }
        OracleConfig { axial_nodes: 61, steps_per_rate: 20.0, extrapolate: true, tolerance: 1e-3, n_freq: 64, instances }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl RunConfig {
    /// Reads TOML, or JSON when the extension is `.json` (e.g. an echoed
    /// `input` block of a previous record).
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|message| ConfigError::Parse { path: path.into(), message })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable in TOML")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = toml::from_str::<RunConfig>("[params]\ndepth = 10.0\nfresnel = 1.0\ndepht = 3.0\n").unwrap_err();
        assert!(err.to_string().contains("depht"), "{err}");
        let err = toml::from_str::<RunConfig>("eta_mim = 0.6\n").unwrap_err();
        assert!(err.to_string().contains("eta_mim"), "{err}");
    }

    #[test]
    fn infinite_fresnel_in_toml_and_json() {
        let c: RunConfig = toml::from_str("[params]\ndepth = 10.0\nfresnel = inf\n").unwrap();
        assert!(c.params.fresnel.is_infinite());
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), c);
    }
}
