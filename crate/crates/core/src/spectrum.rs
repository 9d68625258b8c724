//! Efficiency spectra, quantum capacity and aggregation over azimuthal blocks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dense_svd, randomized_svd, CMat, RandomizedOptions};
use crate::memory_map::{Direction, MemoryMap};
use crate::params::ModelParams;
use faer::c64;

/// Tolerance on `σ² ≤ 1` before a map is declared inconsistent.
pub const BOUND_TOL: f64 = 1e-6;
/// Efficiencies are clamped below this before taking the capacity.
pub const SATURATION: f64 = 1.0 - 1e-12;
/// Threshold on efficiencies that contribute to the capacity.
pub const CAPACITY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpectrum {
    pub azimuthal: u32,
    pub direction: Direction,
    /// Descending, in `[0, 1]`.
    pub efficiencies: Vec<f64>,
    /// Right singular vectors of `T̂` (columns), matching `efficiencies`.
    #[serde(skip)]
    pub input_modes: Option<CMat>,
    /// False when only the leading part of the spectrum (down to
    /// [`SpectrumOptions::floor`]) was computed.
    pub complete: bool,
}

impl BlockSpectrum {
    pub fn leading(&self) -> f64 {
        self.efficiencies.first().copied().unwrap_or(0.0)
    }

    /// Number of efficiencies `≥ eta_min`.
    pub fn count_at_least(&self, eta_min: f64) -> usize {
        self.efficiencies.iter().filter(|&&e| e >= eta_min).count()
    }

    /// Number of efficiencies `> eta_min`.
    pub fn count_above(&self, eta_min: f64) -> usize {
        self.efficiencies.iter().filter(|&&e| e > eta_min).count()
    }

    /// `C_m = Σ_{η_i > 0.5} Q(η_i)`.
    pub fn capacity(&self) -> f64 {
        self.efficiencies.iter().filter(|&&e| e > CAPACITY_THRESHOLD).map(|&e| quantum_capacity(e)).fold(0.0, |acc, q| acc + q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumOptions {
    /// Efficiencies below this may be omitted.
    pub floor: f64,
    pub want_modes: bool,
    /// Maps up to this dimension use a full dense SVD.
    pub dense_limit: usize,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions { floor: 0.2, want_modes: false, dense_limit: 600 }
    }
}

/// Full spectrum with input modes.
pub fn block_spectrum(map: &MemoryMap) -> Result<BlockSpectrum> {
    block_spectrum_with(map, SpectrumOptions { floor: 0.0, want_modes: true, dense_limit: usize::MAX })
}

pub fn block_spectrum_with(map: &MemoryMap, opts: SpectrumOptions) -> Result<BlockSpectrum> {
    let t = map.operator.as_ref();
    let dim = t.nrows().min(t.ncols());
    let (svd, complete) = if dim <= opts.dense_limit || opts.floor <= 0.0 {
        (dense_svd(t, opts.want_modes)?, true)
    } else {
        let ro = RandomizedOptions { floor_sq: opts.floor, want_vectors: opts.want_modes, ..Default::default() };
        let s = randomized_svd(t, ro)?;
        let complete = s.values.len() == dim;
        (s, complete)
    };
    if let Some(&top) = svd.values.first() {
        if !top.is_finite() {
            return Err(Error::Numerical(format!("non-finite singular value in block m = {}", map.azimuthal)));
        }
        if top * top > 1.0 + BOUND_TOL {
            return Err(Error::QuadratureInconsistency { azimuthal: map.azimuthal, efficiency: top * top });
        }
    }
    let mut efficiencies: Vec<f64> = svd.values.iter().map(|s| (s * s).clamp(0.0, 1.0)).collect();
    let mut keep = efficiencies.len();
    if !complete {
        keep = efficiencies.iter().take_while(|&&e| e >= opts.floor).count().max(1).min(keep);
        efficiencies.truncate(keep);
    }
    let input_modes = opts.want_modes.then(|| svd.right.subcols(0, keep.min(svd.right.ncols())).to_owned());
    Ok(BlockSpectrum { azimuthal: map.azimuthal, direction: map.direction, efficiencies, input_modes, complete })
}

/// `Q(η) = max{0, log₂ η − log₂(1 − η)}`, with `η` clamped to
/// [`SATURATION`] so that `Q(1)` is finite (≈ 39.86).
pub fn quantum_capacity(eff: f64) -> f64 {
    let e = eff.clamp(0.0, SATURATION);
    if e <= 0.5 {
        0.0
    } else {
        (e / (1.0 - e)).log2().max(0.0)
    }
}

/// True when `quantum_capacity(eff)` was capped.
pub fn is_saturated(eff: f64) -> bool {
    eff > SATURATION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub azimuthal: u32,
    /// Modes with `η ≥ η_min`.
    pub mode_count: usize,
    /// Modes with `η > 0.5`.
    pub capacity_modes: usize,
    pub capacity: f64,
    pub leading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub direction: Direction,
    pub per_block: Vec<BlockSummary>,
    /// `Σ g_m · mode_count`, `g_0 = 1`, `g_{m>0} = 2`.
    pub total_modes: usize,
    /// `Σ g_m · C_m`.
    pub total_capacity: f64,
    pub threshold: f64,
    pub drive_used: c64,
    /// Some efficiency hit the saturation cap.
    pub saturated: bool,
}

impl CapacityReport {
    pub fn leading(&self) -> f64 {
        self.per_block.iter().map(|b| b.leading).fold(0.0, f64::max)
    }

    /// Modes with `η > 0.5` including degeneracy.
    pub fn capacity_modes(&self) -> usize {
        self.per_block.iter().map(|b| degeneracy(b.azimuthal) * b.capacity_modes).sum()
    }
}

pub fn degeneracy(m: u32) -> usize {
    if m == 0 {
        1
    } else {
        2
    }
}

/// Aggregates one direction's block spectra for `m = 0..=m_max`.
pub fn capacity_report(spectra: &[BlockSpectrum], eta_min: f64, params: &ModelParams) -> Result<CapacityReport> {
    if !(eta_min > 0.0 && eta_min < 1.0) {
        return Err(Error::invalid("eta_min", format!("{eta_min} not in (0, 1)")));
    }
    let Some(first) = spectra.first() else {
        return Err(Error::invalid("spectra", "no blocks"));
    };
    let direction = first.direction;
    let mut sorted: Vec<&BlockSpectrum> = spectra.iter().collect();
    sorted.sort_by_key(|s| s.azimuthal);
    for (expect, s) in sorted.iter().enumerate() {
        if s.direction != direction {
            return Err(Error::invalid("spectra", "mixed read-out directions"));
        }
        if s.azimuthal as usize != expect {
            return Err(Error::invalid("spectra", format!("blocks must cover m = 0..=m_max; missing m = {expect}")));
        }
    }
    let per_block: Vec<BlockSummary> = sorted
        .iter()
        .map(|s| BlockSummary {
            azimuthal: s.azimuthal,
            mode_count: s.count_at_least(eta_min),
            capacity_modes: s.count_above(CAPACITY_THRESHOLD),
            capacity: s.capacity(),
            leading: s.leading(),
        })
        .collect();
    let top = per_block.last().expect("nonempty");
    if top.mode_count > 0 || top.capacity_modes > 0 {
        return Err(Error::Truncation { azimuthal: top.azimuthal, modes: top.mode_count.max(top.capacity_modes) });
    }
    let total_modes = per_block.iter().map(|b| degeneracy(b.azimuthal) * b.mode_count).sum();
    let total_capacity = per_block.iter().map(|b| degeneracy(b.azimuthal) as f64 * b.capacity).fold(0.0, |acc, c| acc + c);
    let saturated = sorted.iter().any(|s| s.efficiencies.iter().any(|&e| is_saturated(e)));
    Ok(CapacityReport { direction, per_block, total_modes, total_capacity, threshold: eta_min, drive_used: params.drive, saturated })
}
