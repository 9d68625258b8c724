//! Per-block pipeline (basis → kernels → maps → spectra) and aggregation
//! over azimuthal blocks with automatic growth of `m_max`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, coupling_block, default_quad_order, CouplingBlock};
use crate::cache::{cache_key, Cache};
use crate::error::{Error, Result};
use crate::memory_map::{BlockKernels, Direction, QuadratureGrid};
use crate::params::{ModelParams, Resolution};
use crate::spectrum::{block_spectrum_with, capacity_report, BlockSpectrum, CapacityReport, SpectrumOptions, CAPACITY_THRESHOLD};

/// Knobs of the block pipeline that are not part of the discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineSettings {
    /// Largest `m_max` reached by automatic growth.
    pub m_cap: u32,
    /// Maps up to this dimension use a dense SVD.
    pub dense_limit: usize,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings { m_cap: 256, dense_limit: 600 }
    }
}

/// Spectrum floor low enough for both the `η_min` count and the capacity.
pub fn spectrum_floor(eta_min: f64) -> f64 {
    (0.8 * eta_min.min(CAPACITY_THRESHOLD)).min(0.2)
}

pub fn block_for(m: u32, res: &Resolution) -> Result<CouplingBlock> {
    let basis = build_basis(m as i64, res)?;
    coupling_block(&basis, default_quad_order(&basis))
}

#[derive(Serialize)]
struct BlockKey<'a> {
    params: &'a ModelParams,
    resolution: Resolution,
    azimuthal: u32,
    direction: Direction,
    floor: f64,
    dense_limit: usize,
}

/// Spectra of block `m` for each requested direction, sharing one set of
/// factored kernels. Cached entries are reused; the rest are computed.
pub fn block_spectra(
    params: &ModelParams,
    res: &Resolution,
    m: u32,
    directions: &[Direction],
    opts: SpectrumOptions,
    cache: Option<&Cache>,
) -> Result<Vec<BlockSpectrum>> {
    // m_max does not influence a single block.
    let resolution = Resolution { m_max: 0, ..*res };
    let keys = directions
        .iter()
        .map(|&direction| {
            cache_key(
                "block_spectrum",
                &BlockKey { params, resolution, azimuthal: m, direction, floor: opts.floor, dense_limit: opts.dense_limit },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut found: Vec<Option<BlockSpectrum>> = match cache {
        Some(c) if !opts.want_modes => keys.iter().map(|k| c.get(k)).collect(),
        _ => vec![None; directions.len()],
    };
    if found.iter().any(Option::is_none) {
        let block = block_for(m, res)?;
        let grid = QuadratureGrid::new(res, &params.coefficients()?)?;
        let kernels = BlockKernels::new(params, &block, grid)?;
        for (i, &direction) in directions.iter().enumerate() {
            if found[i].is_some() {
                continue;
            }
            let map = kernels.map(direction, res.axial);
            let spectrum = block_spectrum_with(&map, opts)?;
            if let Some(c) = cache.filter(|_| !opts.want_modes) {
                if let Err(e) = c.put(&keys[i], &spectrum) {
                    log::warn!("could not cache block m = {m} ({direction}): {e}");
                }
            }
            found[i] = Some(spectrum);
        }
    }
    Ok(found.into_iter().map(|s| s.expect("filled above")).collect())
}

/// Block spectra and capacity reports for one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    /// Resolution with the `m_max` actually used.
    pub resolution: Resolution,
    pub spectra: Vec<BlockSpectrum>,
    pub reports: Vec<CapacityReport>,
}

impl PointResult {
    pub fn report(&self, direction: Direction) -> Option<&CapacityReport> {
        self.reports.iter().find(|r| r.direction == direction)
    }
}

fn is_empty(spectra: &[BlockSpectrum], eta_min: f64) -> bool {
    spectra.iter().all(|s| s.count_at_least(eta_min) == 0 && s.count_above(CAPACITY_THRESHOLD) == 0)
}

/// Capacity reports for `directions`, computing blocks `m = 0..=m_max` and
/// growing `m_max` until the topmost block holds no mode above threshold
/// in any direction.
pub fn capacity_reports(
    params: &ModelParams,
    res: &Resolution,
    directions: &[Direction],
    eta_min: f64,
    settings: &EngineSettings,
    cache: Option<&Cache>,
) -> Result<PointResult> {
    params.validate()?;
    res.validate()?;
    if directions.is_empty() {
        return Err(Error::invalid("directions", "at least one read-out direction is required"));
    }
    if !(eta_min > 0.0 && eta_min < 1.0) {
        return Err(Error::invalid("eta_min", format!("{eta_min} not in (0, 1)")));
    }
    let opts = SpectrumOptions { floor: spectrum_floor(eta_min), want_modes: false, dense_limit: settings.dense_limit };
    let compute = |m: u32| block_spectra(params, res, m, directions, opts, cache);
    let mut blocks: Vec<Vec<BlockSpectrum>> = (0..=res.m_max).into_par_iter().map(compute).collect::<Result<_>>()?;
    let batch = rayon::current_num_threads().max(1) as u32;
    while !is_empty(blocks.last().expect("m = 0 present"), eta_min) {
        let next = blocks.len() as u32;
        if next > settings.m_cap {
            let top = blocks.last().expect("nonempty");
            let modes = top.iter().map(|s| s.count_at_least(eta_min).max(s.count_above(CAPACITY_THRESHOLD))).max().unwrap_or(0);
            return Err(Error::Truncation { azimuthal: next - 1, modes });
        }
        let end = (next + batch - 1).min(settings.m_cap);
        log::info!("block m = {} still holds modes; computing m = {next}..={end}", next - 1);
        let more: Vec<Vec<BlockSpectrum>> = (next..=end).into_par_iter().map(compute).collect::<Result<_>>()?;
        for b in more {
            let done = is_empty(&b, eta_min);
            blocks.push(b);
            if done {
                break;
            }
        }
    }
    let m_max = blocks.len() as u32 - 1;
    let reports = directions
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let spectra: Vec<BlockSpectrum> = blocks.iter().map(|b| b[i].clone()).collect();
            capacity_report(&spectra, eta_min, params)
        })
        .collect::<Result<Vec<_>>>()?;
    let spectra = blocks.into_iter().flatten().collect();
    Ok(PointResult { resolution: Resolution { m_max, ..*res }, spectra, reports })
}
