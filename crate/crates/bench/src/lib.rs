//! Fixtures shared by the benchmarks.

use qmem_core::engine::block_for;
use qmem_core::{c64, CouplingBlock, ModelParams, Resolution};

pub fn params(depth: f64, fresnel: f64) -> ModelParams {
    ModelParams::new(depth, fresnel).expect("valid parameters")
}

/// Resolution with `n_radial` Bessel modes and `n_freq` frequency nodes.
pub fn resolution(n_radial: usize, n_freq: usize) -> Resolution {
    Resolution { n_radial_max: n_radial, n_freq, m_max: 0, ..Default::default() }
}

pub fn block(m: u32, res: &Resolution) -> CouplingBlock {
    block_for(m, res).expect("basis builds")
}

/// Drive used for time-domain runs: `Γ_S = d₀/2`.
pub fn oracle_params(depth: f64, fresnel: f64) -> ModelParams {
    params(depth, fresnel).with_drive(c64::new(depth.sqrt(), 0.0)).expect("valid drive")
}
