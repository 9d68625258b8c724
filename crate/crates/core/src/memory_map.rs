//! Discretized storage → retrieval operators.
//!
//! Input and output are represented by frequency samples of each transverse
//! mode, weighted by square roots of the quadrature weights, so that the
//! Euclidean norm of a coefficient vector is the photon number of the pulse
//! and the squared singular values of the composite operator are
//! efficiencies. A `1/√(2π)` factor sits on each of storage and retrieval.

use faer::{c64, Mat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::basis::CouplingBlock;
use crate::error::{Error, Result};
use crate::linalg::{exp_divided_difference_with, exprel_with, CMat};
use crate::params::{AxialRule, FrequencyRule, ModelCoefficients, ModelParams, Resolution};
use crate::propagator::{BlockOperator, Factor, Propagator};
use crate::special::gauss_legendre_on;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Forward, Direction::Backward];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            other => Err(Error::invalid("direction", format!("expected forward or backward, got {other:?}"))),
        }
    }
}

/// Frequency and axial nodes with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub freq_nodes: Vec<f64>,
    pub freq_weights: Vec<f64>,
    pub axial_nodes: Vec<f64>,
    pub axial_weights: Vec<f64>,
}

/// Default half-width of a truncated frequency window:
/// `8·max(|Γ_S|, 1)·(1 + d₀/20)`.
pub fn default_halfwidth(params: &ModelParams, coeff: &ModelCoefficients) -> f64 {
    8.0 * coeff.spin_decay.norm().max(1.0) * (1.0 + params.depth / 20.0)
}

impl QuadratureGrid {
    pub fn new(res: &Resolution, coeff: &ModelCoefficients) -> Result<Self> {
        res.validate()?;
        let (freq_nodes, freq_weights) = match res.frequency {
            FrequencyRule::Cayley => cayley_rule(res.n_freq, coeff.spin_decay),
            FrequencyRule::Window { halfwidth } => gauss_legendre_on(res.n_freq, -halfwidth, halfwidth),
        };
        let (axial_nodes, axial_weights) = gauss_legendre_on(res.n_axial, 0.0, 1.0);
        Ok(QuadratureGrid { freq_nodes, freq_weights, axial_nodes, axial_weights })
    }

    pub fn n_freq(&self) -> usize {
        self.freq_nodes.len()
    }
}

/// Trapezoid rule in `θ ∈ (−π, π)` for `ν = −Im Γ + Re Γ·tan(θ/2)`.
///
/// On this contour `1/(iν + Γ) = (1 + e^{−iθ})/(2 Re Γ)`, so the integrands
/// are smooth and periodic in `θ` and the rule converges geometrically.
pub fn cayley_rule(n: usize, spin_decay: c64) -> (Vec<f64>, Vec<f64>) {
    let (re, im) = (spin_decay.re, spin_decay.im);
    let step = 2.0 * PI / n as f64;
    (0..n)
        .map(|i| {
            let theta = -PI + (i as f64 + 0.5) * step;
            let half = 0.5 * theta;
            let sec2 = 1.0 / half.cos().powi(2);
            (-im + re * half.tan(), re * sec2 * 0.5 * step)
        })
        .unzip()
}

/// Composite operator `T̂` of one azimuthal block, indexed `(ν_i, mode)` with
/// the mode index fastest.
#[derive(Debug, Clone)]
pub struct MemoryMap {
    pub azimuthal: u32,
    pub direction: Direction,
    pub operator: CMat,
}

/// Factored `A(ν_i)` for every frequency node of one block, shared by the
/// storage and retrieval kernels of both read-out directions.
pub struct BlockKernels {
    pub azimuthal: u32,
    pub grid: QuadratureGrid,
    coeff: ModelCoefficients,
    modes: usize,
    /// `1/(iν_i + Γ_S)`.
    resolvent: Vec<c64>,
    props: Vec<Propagator>,
    /// `e^{λ}` for every eigenvalue of every modal factor.
    exps: Vec<Vec<c64>>,
}

impl BlockKernels {
    pub fn new(params: &ModelParams, block: &CouplingBlock, grid: QuadratureGrid) -> Result<Self> {
        let coeff = params.coefficients()?;
        let op = BlockOperator::new(&coeff, block, params.diffraction_scale());
        let props = grid.freq_nodes.par_iter().map(|&nu| op.propagator(nu)).collect::<Result<Vec<_>>>()?;
        let resolvent = grid.freq_nodes.iter().map(|&nu| op.resolvent(nu)).collect();
        let exps = props
            .iter()
            .map(|p| match &p.factor {
                Factor::Modal { eigenvalues, .. } => eigenvalues.iter().map(|l| l.exp()).collect(),
                Factor::Direct { .. } => Vec::new(),
            })
            .collect();
        Ok(BlockKernels { azimuthal: block.azimuthal, grid, coeff, modes: block.len(), resolvent, props, exps })
    }

    fn freq_scale(&self, i: usize) -> f64 {
        (self.grid.freq_weights[i] / (2.0 * PI)).sqrt()
    }

    /// `√(w_i/2π) · (−c_L)/(iν_i + Γ_S)`.
    fn retrieval_prefactor(&self, i: usize) -> c64 {
        -self.coeff.couple_light * self.resolvent[i] * self.freq_scale(i)
    }

    fn storage_prefactor(&self, i: usize) -> c64 {
        -self.coeff.couple_spin * self.resolvent[i] * self.freq_scale(i)
    }

    /// Retrieval matrix `R`, rows `(ν_i, mode)`, columns `(z_j, mode)`:
    /// `K[Ω̃, iν_i, z_j]/√(2π)`.
    pub fn retrieval_matrix(&self) -> CMat {
        let n = self.modes;
        let nz = self.grid.axial_nodes.len();
        let mut r = Mat::<c64>::zeros(self.grid.n_freq() * n, nz * n);
        for (i, prop) in self.props.iter().enumerate() {
            let pre = -self.coeff.couple_light * self.resolvent[i] / (2.0 * PI).sqrt();
            for (j, &z) in self.grid.axial_nodes.iter().enumerate() {
                let k = prop.exp_times_coupling(1.0 - z);
                for a in 0..n {
                    for b in 0..n {
                        r[(i * n + a, j * n + b)] = pre * k[(a, b)];
                    }
                }
            }
        }
        r
    }

    /// Storage matrix `S`, rows `(z_j, mode)`, columns `(ν_i, mode)`:
    /// `K^T[Ω̃*, iν_i, 1 − z_j]/√(2π)`, or with argument `z_j` (mirrored
    /// spin wave) for backward read-out.
    pub fn storage_matrix(&self, direction: Direction) -> CMat {
        let n = self.modes;
        let nz = self.grid.axial_nodes.len();
        let mut s = Mat::<c64>::zeros(nz * n, self.grid.n_freq() * n);
        for (i, prop) in self.props.iter().enumerate() {
            // Conjugating the drive swaps c_L and c_S and leaves A(ν) unchanged.
            let pre = -self.coeff.couple_spin * self.resolvent[i] / (2.0 * PI).sqrt();
            for (j, &z) in self.grid.axial_nodes.iter().enumerate() {
                let zk = match direction {
                    Direction::Forward => 1.0 - z,
                    Direction::Backward => z,
                };
                let k = prop.exp_times_coupling(1.0 - zk);
                for a in 0..n {
                    for b in 0..n {
                        s[(j * n + a, i * n + b)] = pre * k[(b, a)];
                    }
                }
            }
        }
        s
    }

    /// `T̂ = W_ν^{1/2} R W_z S W_ν^{1/2}` with Gauss–Legendre axial nodes.
    pub fn quadrature_map(&self, direction: Direction) -> MemoryMap {
        let n = self.modes;
        let mut r = self.retrieval_matrix();
        let mut s = self.storage_matrix(direction);
        for (j, &v) in self.grid.axial_weights.iter().enumerate() {
            let root = v.sqrt();
            for a in 0..n {
                r.col_mut(j * n + a).iter_mut().for_each(|x| *x *= root);
                s.row_mut(j * n + a).iter_mut().for_each(|x| *x *= root);
            }
        }
        for i in 0..self.grid.n_freq() {
            let root = self.grid.freq_weights[i].sqrt();
            for a in 0..n {
                r.row_mut(i * n + a).iter_mut().for_each(|x| *x *= root);
                s.col_mut(i * n + a).iter_mut().for_each(|x| *x *= root);
            }
        }
        MemoryMap { azimuthal: self.azimuthal, direction, operator: &r * &s }
    }

    /// `T̂` with the axial integral done in closed form over the eigenmodes of
    /// `A(ν)`; falls back to quadrature if any node needed direct exponentials.
    pub fn exact_map(&self, direction: Direction) -> MemoryMap {
        if !self.props.iter().all(Propagator::is_modal) {
            log::warn!(
                "m = {}: non-diagonalizable system matrix; using {}-node axial quadrature",
                self.azimuthal,
                self.grid.axial_nodes.len()
            );
            return self.quadrature_map(direction);
        }
        let n = self.modes;
        let nf = self.grid.n_freq();
        let pairs: Vec<(usize, usize)> = (0..nf).flat_map(|i| (i..nf).map(move |k| (i, k))).collect();
        let blocks: Vec<CMat> = pairs.par_iter().map(|&(i, k)| self.exact_block(i, k, direction)).collect();
        let mut t = Mat::<c64>::zeros(nf * n, nf * n);
        // T̂ is complex symmetric for both directions: block (k, i) = block (i, k)ᵀ.
        for (&(i, k), blk) in pairs.iter().zip(&blocks) {
            for a in 0..n {
                for b in 0..n {
                    t[(i * n + a, k * n + b)] = blk[(a, b)];
                    t[(k * n + b, i * n + a)] = blk[(a, b)];
                }
            }
        }
        MemoryMap { azimuthal: self.azimuthal, direction, operator: t }
    }

    fn exact_block(&self, i: usize, k: usize, direction: Direction) -> CMat {
        let (Factor::Modal { eigenvalues: li, vectors: vi, coupled: wi }, Factor::Modal { eigenvalues: lk, vectors: vk, coupled: wk }) =
            (&self.props[i].factor, &self.props[k].factor)
        else {
            unreachable!("exact_map checks for modal factors")
        };
        let n = self.modes;
        let pre = self.retrieval_prefactor(i) * self.storage_prefactor(k);
        let overlap = wi * wk.transpose();
        let (ei, ek) = (&self.exps[i], &self.exps[k]);
        let inner = Mat::from_fn(n, n, |a, b| {
            let phi = match direction {
                Direction::Forward => exp_divided_difference_with(li[a], ei[a], lk[b], ek[b]),
                Direction::Backward => exprel_with(li[a] + lk[b], ei[a] * ek[b]),
            };
            overlap[(a, b)] * phi * pre
        });
        vi * &inner * vk.transpose()
    }

    pub fn map(&self, direction: Direction, rule: AxialRule) -> MemoryMap {
        match rule {
            AxialRule::Exact => self.exact_map(direction),
            AxialRule::Quadrature => self.quadrature_map(direction),
        }
    }
}

/// Storage matrix (rows `(z_j, mode)`, columns `(ν_i, mode)`), unweighted.
pub fn storage_map(params: &ModelParams, block: &CouplingBlock, grid: &QuadratureGrid) -> Result<CMat> {
    Ok(BlockKernels::new(params, block, grid.clone())?.storage_matrix(Direction::Forward))
}

/// Retrieval matrix (rows `(ν_i, mode)`, columns `(z_j, mode)`), unweighted.
pub fn retrieval_map(params: &ModelParams, block: &CouplingBlock, grid: &QuadratureGrid) -> Result<CMat> {
    Ok(BlockKernels::new(params, block, grid.clone())?.retrieval_matrix())
}

/// Forward read-out map with axial quadrature.
pub fn forward_map(params: &ModelParams, block: &CouplingBlock, grid: &QuadratureGrid) -> Result<MemoryMap> {
    Ok(BlockKernels::new(params, block, grid.clone())?.quadrature_map(Direction::Forward))
}

/// Backward read-out map with axial quadrature: the stored spin wave is
/// mirrored in `z` without conjugating its transverse amplitudes.
pub fn backward_map(params: &ModelParams, block: &CouplingBlock, grid: &QuadratureGrid) -> Result<MemoryMap> {
    Ok(BlockKernels::new(params, block, grid.clone())?.quadrature_map(Direction::Backward))
}

/// Map for `direction` using the resolution's axial rule.
pub fn memory_map(
    params: &ModelParams,
    block: &CouplingBlock,
    res: &Resolution,
    direction: Direction,
) -> Result<MemoryMap> {
    let grid = QuadratureGrid::new(res, &params.coefficients()?)?;
    Ok(BlockKernels::new(params, block, grid)?.map(direction, res.axial))
}
