//! JSON result records and CSV tables.

use std::io::Write;
use std::path::Path;

use qmem_core::{BlockSpectrum, CapacityReport, Direction, PowerLawFit, Resolution, SweepPoint, SweepQuantity};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const RECORD_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub command: String,
    /// Complete effective configuration; rerunning it reproduces `outputs`.
    pub input: RunConfig,
    pub outputs: Outputs,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outputs {
    Spectrum { resolution: Resolution, spectra: Vec<BlockSpectrum>, reports: Vec<CapacityReport> },
    Sweep { axis: String, values: Vec<f64>, points: Vec<SweepPoint>, fits: Vec<DirectionFit> },
    Oracle { cases: Vec<OracleCase>, max_deviation: f64, tolerance: f64, passed: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionFit {
    pub direction: Direction,
    pub quantity: SweepQuantity,
    pub fit: PowerLawFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCase {
    pub depth: f64,
    #[serde(with = "qmem_core::params::fresnel_serde")]
    pub fresnel: f64,
    pub n_radial_max: usize,
    pub m: u32,
    pub direction: Direction,
    pub pipeline: f64,
    pub oracle: f64,
    /// |fine − coarse| when extrapolating, else 0.
    pub spread: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub code_version: String,
    pub wall_time: f64,
    pub threads: usize,
}

impl Provenance {
    pub fn new(wall_time: f64) -> Self {
        Provenance {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time,
            threads: rayon::current_num_threads(),
        }
    }
}

pub fn write_json(path: &Path, record: &ResultRecord) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, record)?;
    f.write_all(b"\n")
}

/// `m, direction, mode_index, efficiency`, sorted by `m` then by
/// descending efficiency.
pub fn write_spectrum_csv(path: &Path, spectra: &[BlockSpectrum]) -> csv::Result<()> {
    let mut rows: Vec<(u32, Direction, usize, f64)> = Vec::new();
    for s in spectra {
        rows.extend(s.efficiencies.iter().enumerate().map(|(i, &e)| (s.azimuthal, s.direction, i, e)));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(b.3.total_cmp(&a.3)).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["m", "direction", "mode_index", "efficiency"])?;
    for (m, d, i, e) in rows {
        w.write_record([m.to_string(), d.as_str().to_string(), i.to_string(), format!("{e:?}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, axis: &str, values: &[f64], points: &[SweepPoint]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        axis,
        "direction",
        "depth",
        "fresnel",
        "drive",
        "total_modes",
        "capacity_modes",
        "total_capacity",
        "leading",
        "m_max",
        "n_radial_max",
        "n_freq",
    ])?;
    for (x, p) in values.iter().zip(points) {
        for r in [&p.report_forward, &p.report_backward].into_iter().flatten() {
            w.write_record([
                format!("{x:?}"),
                r.direction.as_str().to_string(),
                format!("{:?}", p.params.depth),
                format!("{:?}", p.params.fresnel),
                format!("{:?}", p.params.drive.norm()),
                r.total_modes.to_string(),
                r.capacity_modes().to_string(),
                format!("{:?}", r.total_capacity),
                format!("{:?}", r.leading()),
                p.resolution.m_max.to_string(),
                p.resolution.n_radial_max.to_string(),
                p.resolution.n_freq.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_oracle_csv(path: &Path, cases: &[OracleCase]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["depth", "fresnel", "n_radial_max", "m", "direction", "pipeline", "oracle", "spread", "deviation"])?;
    for c in cases {
        w.write_record([
            format!("{:?}", c.depth),
            format!("{:?}", c.fresnel),
            c.n_radial_max.to_string(),
            c.m.to_string(),
            c.direction.as_str().to_string(),
            format!("{:?}", c.pipeline),
            format!("{:?}", c.oracle),
            format!("{:?}", c.spread),
            format!("{:?}", c.deviation),
        ])?;
    }
    w.flush()?;
    Ok(())
}
