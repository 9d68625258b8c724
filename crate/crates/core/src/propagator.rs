//! Laplace-domain light propagation: the system matrix `A(ν)` and the
//! retrieval kernel `K(ν, z) = −c_L/(iν + Γ_S) · exp[A(ν)(1 − z)] · B`.

use faer::linalg::solvers::DenseSolveCore;
use faer::{c64, Mat};

use crate::basis::CouplingBlock;
use crate::error::{Error, Result};
use crate::linalg::{condition1, expm, to_complex, CMat};
use crate::params::ModelCoefficients;

/// Eigenvector condition number (1-norm) above which the modal exponential
/// is verified against a Padé exponential before use.
pub const CONDITION_LIMIT: f64 = 1e8;
/// Largest accepted relative error of the modal exponential.
pub const MODAL_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct SystemMatrix {
    pub freq: f64,
    pub matrix: CMat,
}

#[derive(Debug, Clone)]
pub struct KernelSlice {
    pub freq: f64,
    pub axial_nodes: Vec<f64>,
    /// `K(ν, z_j)` per axial node.
    pub values: Vec<CMat>,
}

/// Frequency-independent pieces of `A(ν)` for one block.
#[derive(Debug, Clone)]
pub struct BlockOperator {
    pub coeff: ModelCoefficients,
    /// `−i diag(κ²)/(4πF) − c_abs B²`.
    pub base: CMat,
    pub coupling: CMat,
    pub coupling_sq: CMat,
}

impl BlockOperator {
    pub fn new(coeff: &ModelCoefficients, block: &CouplingBlock, diffraction_scale: f64) -> Self {
        let coupling = to_complex(block.coupling.as_ref());
        let coupling_sq = &coupling * &coupling;
        let n = block.len();
        let base = Mat::from_fn(n, n, |i, j| {
            let diag = if i == j { c64::new(0.0, -block.diffraction[i] * diffraction_scale) } else { c64::new(0.0, 0.0) };
            diag - coeff.absorb * coupling_sq[(i, j)]
        });
        BlockOperator { coeff: *coeff, base, coupling, coupling_sq }
    }

    pub fn len(&self) -> usize {
        self.base.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `1/(iν + Γ_S)`.
    pub fn resolvent(&self, freq: f64) -> c64 {
        1.0 / (c64::new(0.0, freq) + self.coeff.spin_decay)
    }

    pub fn system_matrix(&self, freq: f64) -> CMat {
        let g = self.coeff.couple_light * self.coeff.couple_spin * self.resolvent(freq);
        &self.base + Mat::from_fn(self.len(), self.len(), |i, j| self.coupling_sq[(i, j)] * g)
    }

    /// Factor `A(ν)` for repeated exponentiation.
    ///
    /// The eigendecomposition is accepted when `V e^{Λs} V⁻¹ B` reproduces
    /// the Padé exponential at `s = 0, ½, 1` to [`MODAL_TOLERANCE`];
    /// otherwise exponentials are formed directly at every use.
    pub fn propagator(&self, freq: f64) -> Result<Propagator> {
        let a = self.system_matrix(freq);
        if !a.col_iter().all(|c| c.iter().all(|x| x.re.is_finite() && x.im.is_finite())) {
            return Err(Error::Numerical(format!(
                "non-finite system matrix at ν = {freq}, coefficients {:?}",
                self.coeff
            )));
        }
        match self.modal(&a, freq) {
            Some(p) => Ok(p),
            None => Ok(self.direct(a, freq)),
        }
    }

    /// Factor that always forms exponentials directly.
    pub fn direct_propagator(&self, freq: f64) -> Propagator {
        self.direct(self.system_matrix(freq), freq)
    }

    fn direct(&self, a: CMat, freq: f64) -> Propagator {
        Propagator { freq, factor: Factor::Direct { matrix: a, coupling: self.coupling.clone() } }
    }

    fn modal(&self, a: &CMat, freq: f64) -> Option<Propagator> {
        let eig = a.eigen().ok()?;
        let vectors = eig.U().to_owned();
        let inverse = vectors.partial_piv_lu().inverse();
        if !inverse.col_iter().all(|c| c.iter().all(|x| x.re.is_finite() && x.im.is_finite())) {
            return None;
        }
        let s = eig.S().column_vector();
        let eigenvalues: Vec<c64> = (0..s.nrows()).map(|i| s[i]).collect();
        let coupled = &inverse * &self.coupling;
        let cond = condition1(vectors.as_ref(), inverse.as_ref());
        let prop = Propagator { freq, factor: Factor::Modal { eigenvalues, vectors, coupled } };
        if cond > CONDITION_LIMIT {
            let n = a.nrows();
            let half = expm(Mat::from_fn(n, n, |i, j| a[(i, j)] * 0.5).as_ref());
            let full = &half * &half;
            let checks = [(0.0, self.coupling.clone()), (0.5, &half * &self.coupling), (1.0, &full * &self.coupling)];
            let worst = checks
                .iter()
                .map(|(s, reference)| (&prop.exp_times_coupling(*s) - reference).norm_l2() / reference.norm_l2())
                .fold(0.0, f64::max);
            log::debug!("ν = {freq}: eigenvector condition {cond:.2e}, modal exponential error {worst:.2e}");
            if !(worst <= MODAL_TOLERANCE) {
                return None;
            }
        }
        Some(prop)
    }
}

#[derive(Debug, Clone)]
pub enum Factor {
    /// `A = V Λ V⁻¹`, with `coupled = V⁻¹ B`.
    Modal { eigenvalues: Vec<c64>, vectors: CMat, coupled: CMat },
    Direct { matrix: CMat, coupling: CMat },
}

/// A factored `A(ν)` at one frequency.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub freq: f64,
    pub factor: Factor,
}

impl Propagator {
    /// `exp[A·s] · B`.
    pub fn exp_times_coupling(&self, s: f64) -> CMat {
        match &self.factor {
            Factor::Modal { eigenvalues, vectors, coupled } => {
                let n = vectors.nrows();
                let scaled = Mat::from_fn(n, n, |i, j| vectors[(i, j)] * (eigenvalues[j] * s).exp());
                &scaled * coupled
            }
            Factor::Direct { matrix, coupling } => {
                let n = matrix.nrows();
                let scaled = Mat::from_fn(n, n, |i, j| matrix[(i, j)] * s);
                expm(scaled.as_ref()) * coupling
            }
        }
    }

    pub fn is_modal(&self) -> bool {
        matches!(self.factor, Factor::Modal { .. })
    }
}

pub fn system_matrix(coeff: &ModelCoefficients, block: &CouplingBlock, fresnel: f64, freq: f64) -> SystemMatrix {
    let op = BlockOperator::new(coeff, block, diffraction_scale(fresnel));
    SystemMatrix { freq, matrix: op.system_matrix(freq) }
}

pub fn kernel_slice(
    coeff: &ModelCoefficients,
    block: &CouplingBlock,
    fresnel: f64,
    freq: f64,
    axial_nodes: &[f64],
) -> Result<KernelSlice> {
    if let Some(z) = axial_nodes.iter().find(|z| !(0.0..=1.0).contains(*z)) {
        return Err(Error::invalid("axial_nodes", format!("{z} outside [0, 1]")));
    }
    let op = BlockOperator::new(coeff, block, diffraction_scale(fresnel));
    let prop = op.propagator(freq)?;
    let pre = -coeff.couple_light * op.resolvent(freq);
    let values = axial_nodes
        .iter()
        .map(|&z| {
            let mut k = prop.exp_times_coupling(1.0 - z);
            k.col_iter_mut().for_each(|c| c.iter_mut().for_each(|x| *x *= pre));
            k
        })
        .collect();
    Ok(KernelSlice { freq, axial_nodes: axial_nodes.to_vec(), values })
}

pub(crate) fn diffraction_scale(fresnel: f64) -> f64 {
    if fresnel.is_infinite() {
        0.0
    } else {
        1.0 / (4.0 * std::f64::consts::PI * fresnel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_basis, coupling_block, default_quad_order};
    use crate::params::{ModelParams, Resolution};
    use faer::Side;
    use proptest::prelude::*;

    fn block(m: i64, n: usize) -> CouplingBlock {
        let res = Resolution { n_radial_max: n, ..Default::default() };
        let basis = build_basis(m, &res).unwrap();
        coupling_block(&basis, default_quad_order(&basis)).unwrap()
    }

    #[test]
    fn scalar_system_matrix() {
        let p = ModelParams::new(30.0, 0.7).unwrap().with_detuning(0.3).unwrap().with_drive(c64::new(1.5, 0.2)).unwrap();
        let c = p.coefficients().unwrap();
        let (b, k) = (0.6, 2.3);
        let nu = 0.8;
        let a = system_matrix(&c, &CouplingBlock::scalar(b, k), 0.7, nu).matrix[(0, 0)];
        let expect = c64::new(0.0, -k / (4.0 * std::f64::consts::PI * 0.7)) - c.absorb * b * b
            + c.couple_light * c.couple_spin * b * b / (c64::new(0.0, nu) + c.spin_decay);
        assert!((a - expect).norm() < 1e-14);
        let inf = system_matrix(&c, &CouplingBlock::scalar(b, k), f64::INFINITY, nu).matrix[(0, 0)];
        let expect_inf = -c.absorb * b * b + c.couple_light * c.couple_spin * b * b / (c64::new(0.0, nu) + c.spin_decay);
        assert!((inf - expect_inf).norm() < 1e-14);
    }

    #[test]
    fn high_frequency_limit() {
        let c = ModelParams::new(50.0, 1.0).unwrap().coefficients().unwrap();
        let blk = block(0, 6);
        let op = BlockOperator::new(&c, &blk, diffraction_scale(1.0));
        let mut last = f64::INFINITY;
        for nu in [1e2, 1e3, 1e4] {
            let d = &op.system_matrix(nu) - &op.base;
            let gap = d.norm_l2();
            assert!(gap * nu < 50.0 && gap < last);
            last = gap;
        }
    }

    #[test]
    fn kernel_at_exit_is_coupling() {
        let c = ModelParams::new(20.0, 0.5).unwrap().coefficients().unwrap();
        let blk = block(1, 5);
        let nu = 0.37;
        let slice = kernel_slice(&c, &blk, 0.5, nu, &[1.0, 0.0]).unwrap();
        let pre = -c.couple_light / (c64::new(0.0, nu) + c.spin_decay);
        for i in 0..5 {
            for j in 0..5 {
                assert!((slice.values[0][(i, j)] - pre * blk.coupling[(i, j)]).norm() < 1e-12);
            }
        }
        assert!(kernel_slice(&c, &blk, 0.5, nu, &[1.5]).is_err());
    }

    #[test]
    fn scalar_kernel_closed_form() {
        let p = ModelParams::new(10.0, 2.0).unwrap();
        let c = p.coefficients().unwrap();
        let (b, k) = (0.8, 1.7);
        let nu = -0.4;
        let slice = kernel_slice(&c, &CouplingBlock::scalar(b, k), 2.0, nu, &[0.0]).unwrap();
        let a = system_matrix(&c, &CouplingBlock::scalar(b, k), 2.0, nu).matrix[(0, 0)];
        let pre = c.couple_light / (c64::new(0.0, nu) + c.spin_decay);
        assert!((slice.values[0][(0, 0)].norm() - pre.norm() * a.re.exp() * b).abs() < 1e-14);
    }

    #[test]
    fn modal_and_direct_exponentials_agree() {
        let c = ModelParams::new(40.0, 0.8).unwrap().coefficients().unwrap();
        let blk = block(2, 8);
        let op = BlockOperator::new(&c, &blk, diffraction_scale(0.8));
        for nu in [-3.0, 0.0, 0.2, 5.0] {
            let modal = op.propagator(nu).unwrap();
            assert!(modal.is_modal());
            let direct = Propagator {
                freq: nu,
                factor: Factor::Direct { matrix: op.system_matrix(nu), coupling: op.coupling.clone() },
            };
            for s in [0.0, 0.3, 1.0] {
                let a = modal.exp_times_coupling(s);
                let b = direct.exp_times_coupling(s);
                assert!((&a - &b).norm_l2() <= 1e-9 * b.norm_l2(), "ν={nu} s={s}");
            }
        }
    }

    #[test]
    fn system_matrix_is_complex_symmetric() {
        let c = ModelParams::new(40.0, 0.8).unwrap().with_drive(c64::new(0.3, 0.9)).unwrap().coefficients().unwrap();
        let a = system_matrix(&c, &block(3, 7), 0.8, 1.1).matrix;
        assert!((&a - a.transpose()).norm_l2() < 1e-13 * a.norm_l2());
    }

    fn hermitian_part_max_eig(a: &CMat) -> f64 {
        let h = Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5);
        let e = h.self_adjoint_eigenvalues(Side::Lower).unwrap();
        e.into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn absorptive_on_resonance(depth in 0.5f64..200.0, fresnel in 0.05f64..10.0, drive in 0.05f64..20.0, m in 0i64..6) {
            let c = ModelParams::new(depth, fresnel).unwrap().with_drive(c64::new(drive, 0.0)).unwrap().coefficients().unwrap();
            let a = system_matrix(&c, &block(m, 6), fresnel, 0.0).matrix;
            prop_assert!(hermitian_part_max_eig(&a) <= 1e-10 * depth);
        }

        #[test]
        fn drive_phase_multiplies_kernel(phase in -3.0f64..3.0, nu in -4.0f64..4.0) {
            let p = ModelParams::new(25.0, 0.6).unwrap();
            let rotated = p.with_drive(c64::from_polar(1.0, phase)).unwrap();
            let blk = block(1, 4);
            let k0 = kernel_slice(&p.coefficients().unwrap(), &blk, 0.6, nu, &[0.25]).unwrap();
            let k1 = kernel_slice(&rotated.coefficients().unwrap(), &blk, 0.6, nu, &[0.25]).unwrap();
            let rot = c64::from_polar(1.0, phase);
            let diff = &k1.values[0] - Mat::from_fn(4, 4, |i, j| k0.values[0][(i, j)] * rot);
            prop_assert!(diff.norm_l2() <= 1e-12 * k0.values[0].norm_l2());
        }
    }
}
