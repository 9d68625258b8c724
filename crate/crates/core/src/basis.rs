//! Dirichlet Bessel modes on a disc and the Gaussian-density coupling matrix.

use faer::Mat;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::params::Resolution;
use crate::special::{bessel_j_upto, bessel_zeros, gauss_legendre_on};

const ZERO_TOL: f64 = 1e-13;
const COUPLING_TOL: f64 = 1e-10;
const MAX_QUAD_ORDER: usize = 1 << 14;

/// Radial modes `u_mn = N_mn J_m(κ_mn ρ) e^{imφ}` of one azimuthal block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockBasis {
    /// `|m|`; blocks `m` and `-m` share a basis.
    pub azimuthal: u32,
    pub wavenumbers: Vec<f64>,
    pub norms: Vec<f64>,
    pub disc_radius: f64,
}

impl BlockBasis {
    pub fn len(&self) -> usize {
        self.wavenumbers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavenumbers.is_empty()
    }

    /// Radial profile `N_mn J_m(κ_mn ρ)` of every mode at `rho`.
    pub fn radial_values(&self, rho: f64) -> Vec<f64> {
        let m = self.azimuthal as usize;
        self.wavenumbers
            .iter()
            .zip(&self.norms)
            .map(|(k, n)| n * bessel_j_upto(m, k * rho)[m])
            .collect()
    }
}

/// Density-weighted overlap matrix `B` and diffraction spectrum `κ²` of one block.
#[derive(Debug, Clone)]
pub struct CouplingBlock {
    pub azimuthal: u32,
    /// Real symmetric positive-definite `B`.
    pub coupling: Mat<f64>,
    /// `κ²_mn`, ascending.
    pub diffraction: Vec<f64>,
}

impl CouplingBlock {
    pub fn len(&self) -> usize {
        self.diffraction.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diffraction.is_empty()
    }

    /// A one-mode block with coupling `b` and wavenumber squared `k2`.
    pub fn scalar(b: f64, k2: f64) -> Self {
        CouplingBlock { azimuthal: 0, coupling: Mat::from_fn(1, 1, |_, _| b), diffraction: vec![k2] }
    }
}

/// Bessel basis for azimuthal number `m` (sign ignored).
pub fn build_basis(m: i64, res: &Resolution) -> Result<BlockBasis> {
    res.validate()?;
    let order = m.unsigned_abs() as u32;
    let radius = res.disc_radius;
    let zeros = bessel_zeros(order, res.n_radial_max, ZERO_TOL)?;
    let norms = zeros
        .iter()
        .map(|&x| {
            let next = bessel_j_upto(order as usize + 1, x)[order as usize + 1];
            1.0 / (PI.sqrt() * radius * next.abs())
        })
        .collect();
    Ok(BlockBasis {
        azimuthal: order,
        wavenumbers: zeros.iter().map(|x| x / radius).collect(),
        norms,
        disc_radius: radius,
    })
}

/// Gaussian transverse density profile `n(ρ)/n₀`.
pub fn gaussian_weight(rho: f64) -> f64 {
    (-0.5 * rho * rho).exp()
}

/// Coupling block for the Gaussian density, with Gauss–Legendre order
/// doubled from `quad_order` until no entry of `B` moves by more than 1e-10.
pub fn coupling_block(basis: &BlockBasis, quad_order: usize) -> Result<CouplingBlock> {
    coupling_block_weighted(basis, quad_order, gaussian_weight)
}

/// As [`coupling_block`] with an arbitrary radial weight.
pub fn coupling_block_weighted(
    basis: &BlockBasis,
    quad_order: usize,
    weight: impl Fn(f64) -> f64,
) -> Result<CouplingBlock> {
    if basis.is_empty() {
        return Err(Error::invalid("basis", "empty block"));
    }
    let mut order = quad_order.max(8);
    let mut previous = overlap(basis, order, &weight);
    loop {
        order *= 2;
        if order > MAX_QUAD_ORDER {
            return Err(Error::Resolution(format!(
                "radial quadrature for m = {} did not stabilize below order {MAX_QUAD_ORDER}; raise quad_order",
                basis.azimuthal
            )));
        }
        let next = overlap(basis, order, &weight);
        let mut change = 0.0_f64;
        for j in 0..next.ncols() {
            for i in 0..next.nrows() {
                change = change.max((next[(i, j)] - previous[(i, j)]).abs());
            }
        }
        previous = next;
        if change <= COUPLING_TOL {
            break;
        }
    }
    Ok(CouplingBlock {
        azimuthal: basis.azimuthal,
        coupling: previous,
        diffraction: basis.wavenumbers.iter().map(|k| k * k).collect(),
    })
}

/// Suggested starting quadrature order: enough nodes to resolve the most
/// oscillatory product of two modes.
pub fn default_quad_order(basis: &BlockBasis) -> usize {
    let kmax = basis.wavenumbers.last().copied().unwrap_or(1.0);
    (2.0 * kmax * basis.disc_radius / PI) as usize + 32
}

fn overlap(basis: &BlockBasis, order: usize, weight: &impl Fn(f64) -> f64) -> Mat<f64> {
    let (rho, w) = gauss_legendre_on(order, 0.0, basis.disc_radius);
    let n = basis.len();
    let m = basis.azimuthal as usize;
    let mut profile = Mat::<f64>::zeros(order, n);
    let mut scaled = Mat::<f64>::zeros(order, n);
    for (q, (&r, &wq)) in rho.iter().zip(&w).enumerate() {
        let factor = 2.0 * PI * wq * weight(r) * r;
        for (k, (&kappa, &norm)) in basis.wavenumbers.iter().zip(&basis.norms).enumerate() {
            let v = norm * bessel_j_upto(m, kappa * r)[m];
            profile[(q, k)] = v;
            scaled[(q, k)] = v * factor;
        }
    }
    let mut b = profile.transpose() * &scaled;
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (b[(i, j)] + b[(j, i)]);
            b[(i, j)] = avg;
            b[(j, i)] = avg;
        }
    }
    b
}
