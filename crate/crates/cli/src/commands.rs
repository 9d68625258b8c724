use std::path::Path;
use std::time::Instant;

use qmem_core::engine::block_for;
use qmem_core::oracle::{richardson_leading, time_domain_spectrum, OracleSettings};
use qmem_core::{
    block_spectrum, c64, capacity_reports, fit_power_law, memory_map, sweep_depth, sweep_fresnel, Cache, Direction,
    ModelParams, Resolution, SweepOptions, SweepQuantity,
};

use crate::config::RunConfig;
use crate::record::{self, DirectionFit, OracleCase, Outputs, Provenance, ResultRecord, RECORD_SCHEMA};

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] qmem_core::Error),
    #[error("writing results: {0}")]
    Output(String),
    #[error("oracle deviation {deviation:.3e} exceeds tolerance {tolerance:e}")]
    OracleMismatch { deviation: f64, tolerance: f64 },
}

impl Failure {
    /// 1 configuration/validation, 2 convergence/resolution, 3 numerical.
    pub fn exit_code(&self) -> u8 {
        use qmem_core::Error as E;
        match self {
            Failure::Config(_) | Failure::Output(_) => 1,
            Failure::Core(e) => match e {
                E::Validation { .. } | E::Io(_) | E::Json(_) => 1,
                E::Resolution(_) | E::Convergence { .. } | E::Truncation { .. } => 2,
                E::Numerical(_) | E::QuadratureInconsistency { .. } => 3,
            },
            Failure::OracleMismatch { .. } => 3,
        }
    }
}

fn output_error(e: impl std::fmt::Display) -> Failure {
    Failure::Output(e.to_string())
}

fn open_cache(cfg: &RunConfig) -> Option<Cache> {
    cfg.cache.then(|| Cache::open(&cfg.cache_dir))
}

fn finish(cfg: &RunConfig, name: &str, outputs: Outputs, start: Instant) -> Result<(ResultRecord, std::path::PathBuf), Failure> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(output_error)?;
    let record = ResultRecord {
        schema_version: RECORD_SCHEMA,
        command: name.to_string(),
        input: cfg.clone(),
        outputs,
        provenance: Provenance::new(start.elapsed().as_secs_f64()),
    };
    let json = cfg.out_dir.join(format!("{name}.json"));
    record::write_json(&json, &record).map_err(output_error)?;
    Ok((record, cfg.out_dir.join(format!("{name}.csv"))))
}

fn shown(path: &Path) -> String {
    path.display().to_string()
}

pub fn spectrum(cfg: RunConfig) -> Result<(), Failure> {
    let start = Instant::now();
    let cache = open_cache(&cfg);
    let dirs = cfg.direction.list();
    let out = capacity_reports(&cfg.params, &cfg.resolution, &dirs, cfg.eta_min, &cfg.engine, cache.as_ref())?;
    for r in &out.reports {
        let counts: Vec<String> = r.per_block.iter().map(|b| b.mode_count.to_string()).collect();
        println!(
            "{:<8} modes(η≥{}) {:>6}  capacity {:>10.3}  leading {:.6}  per-m [{}]",
            r.direction.as_str(),
            cfg.eta_min,
            r.total_modes,
            r.total_capacity,
            r.leading(),
            counts.join(" ")
        );
    }
    let spectra = out.spectra.clone();
    let outputs = Outputs::Spectrum { resolution: out.resolution, spectra: out.spectra, reports: out.reports };
    let (_, csv) = finish(&cfg, "spectrum", outputs, start)?;
    record::write_spectrum_csv(&csv, &spectra).map_err(output_error)?;
    println!("wrote {}", shown(&cfg.out_dir));
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub enum Axis {
    Fresnel,
    Depth,
}

pub fn sweep(cfg: RunConfig, axis: Axis) -> Result<(), Failure> {
    let start = Instant::now();
    let cache = open_cache(&cfg);
    let dirs = cfg.direction.list();
    let opts = SweepOptions {
        resolution: cfg.resolution,
        converge: cfg.sweep.converge.then_some(cfg.sweep.refine),
        drive: cfg.sweep.drive.clone(),
        settings: cfg.engine,
        detuning: cfg.params.detuning,
        base_drive: cfg.params.drive,
    };
    // The drive (if optimized) follows the first requested direction;
    // every direction is fitted from the same points.
    let (name, values, (points, _)) = match axis {
        Axis::Fresnel => (
            "sweep-fresnel",
            cfg.sweep.fresnel_values.clone(),
            sweep_fresnel(cfg.params.depth, &cfg.sweep.fresnel_values, dirs[0], cfg.eta_min, &opts, cache.as_ref())?,
        ),
        Axis::Depth => (
            "sweep-depth",
            cfg.sweep.depth_values.clone(),
            sweep_depth(cfg.params.fresnel, &cfg.sweep.depth_values, dirs[0], cfg.eta_min, &opts, cache.as_ref())?,
        ),
    };
    let mut fits = Vec::new();
    for &direction in &dirs {
        let quantity = match (axis, direction) {
            (Axis::Depth, Direction::Forward) => SweepQuantity::ModeCount,
            _ => SweepQuantity::Capacity,
        };
        let data: Vec<(f64, f64)> =
            values.iter().zip(&points).map(|(&x, p)| (x, quantity.of(p.report(direction).expect("reported")))).collect();
        let fit = fit_power_law(&data)?;
        println!(
            "{:<8} {:?} ∝ x^{:.4}  prefactor {:.4e}  r² {:.5}  ({} points)",
            direction.as_str(),
            quantity,
            fit.exponent,
            fit.prefactor,
            fit.r_squared,
            fit.points_used
        );
        fits.push(DirectionFit { direction, quantity, fit });
    }
    let axis_name = match axis {
        Axis::Fresnel => "fresnel",
        Axis::Depth => "depth",
    };
    let csv_points = points.clone();
    let outputs = Outputs::Sweep { axis: axis_name.into(), values: values.clone(), points, fits };
    let (_, csv) = finish(&cfg, name, outputs, start)?;
    record::write_sweep_csv(&csv, axis_name, &values, &csv_points).map_err(output_error)?;
    println!("wrote {}", shown(&cfg.out_dir));
    Ok(())
}

pub fn oracle(cfg: RunConfig) -> Result<(), Failure> {
    let start = Instant::now();
    let oc = &cfg.oracle;
    if oc.instances.is_empty() {
        return Err(Failure::Config("oracle suite is empty; add [[oracle.instances]]".into()));
    }
    if !(oc.tolerance > 0.0) {
        return Err(Failure::Config(format!("oracle.tolerance must be positive, got {}", oc.tolerance)));
    }
    let settings = OracleSettings { axial_nodes: oc.axial_nodes, steps_per_rate: oc.steps_per_rate, ..Default::default() };
    let mut cases = Vec::new();
    for inst in &oc.instances {
        // The oracle's step count scales with the drive; Ω̃ = √d₀ keeps it
        // moderate and leaves the efficiencies unchanged.
        let params = ModelParams::new(inst.depth, inst.fresnel)?
            .with_detuning(cfg.params.detuning)?
            .with_drive(c64::new(inst.depth.sqrt(), 0.0))?;
        let res = Resolution { n_radial_max: inst.n_radial_max, n_freq: oc.n_freq, ..cfg.resolution };
        let block = block_for(inst.m, &res)?;
        for direction in cfg.direction.list() {
            let pipeline = block_spectrum(&memory_map(&params, &block, &res, direction)?)?.leading();
            let (oracle, spread) = if oc.extrapolate {
                richardson_leading(&params, &block, direction, &settings)?
            } else {
                (time_domain_spectrum(&params, &block, direction, &settings)?[0], 0.0)
            };
            if spread > oc.tolerance {
                return Err(qmem_core::Error::Convergence {
                    rounds: 1,
                    detail: format!(
                        "time-domain grid unresolved at d₀ = {}, F = {}: fine/coarse differ by {spread:.3e}",
                        inst.depth, inst.fresnel
                    ),
                }
                .into());
            }
            let deviation = (oracle - pipeline).abs();
            println!(
                "d₀ {:>6} F {:>8} n_r {} m {} {:<8} pipeline {:.6} oracle {:.6} |Δ| {:.2e}",
                inst.depth,
                inst.fresnel,
                inst.n_radial_max,
                inst.m,
                direction.as_str(),
                pipeline,
                oracle,
                deviation
            );
            cases.push(OracleCase {
                depth: inst.depth,
                fresnel: inst.fresnel,
                n_radial_max: inst.n_radial_max,
                m: inst.m,
                direction,
                pipeline,
                oracle,
                spread,
                deviation,
            });
        }
    }
    let max_deviation = cases.iter().map(|c| c.deviation).fold(0.0, f64::max);
    let passed = max_deviation <= oc.tolerance;
    println!("max deviation {max_deviation:.3e} (tolerance {:e}): {}", oc.tolerance, if passed { "pass" } else { "FAIL" });
    let csv_cases = cases.clone();
    let outputs = Outputs::Oracle { cases, max_deviation, tolerance: oc.tolerance, passed };
    let (_, csv) = finish(&cfg, "oracle", outputs, start)?;
    record::write_oracle_csv(&csv, &csv_cases).map_err(output_error)?;
    if passed {
        Ok(())
    } else {
        Err(Failure::OracleMismatch { deviation: max_deviation, tolerance: oc.tolerance })
    }
}
