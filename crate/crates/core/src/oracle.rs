//! Time-domain reference solver: method of lines on a uniform axial grid.
//!
//! The spin wave is piecewise linear in `z̃`; for a given spin wave the light
//! equation is integrated exactly node to node with an exponential
//! integrator, and the spin equation is advanced by classical RK4. No
//! Laplace transforms are involved, so the kernel pipeline can be checked
//! against it.
//!
//! Besides pulse-driven storage and retrieval, [`time_domain_spectrum`]
//! builds the whole storage → retrieval map from impulse responses. With a
//! constant drive both stages are time invariant: storing a unit impulse
//! leaves the spin wave `−c_S B e^{Mz̃}` and everything after is free
//! evolution, so a handful of runs (and their transposes) suffice.

use faer::{c64, Mat, MatRef, Side};
use serde::{Deserialize, Serialize};

use crate::basis::CouplingBlock;
use crate::error::{Error, Result};
use crate::linalg::{expm, to_complex, CMat};
use crate::memory_map::Direction;
use crate::params::{ModelCoefficients, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSettings {
    /// Uniform axial nodes including both faces.
    pub axial_nodes: usize,
    /// RK4 steps per unit of the fastest rate `max(|Γ_S|, |c_abs|·‖B²‖)`.
    pub steps_per_rate: f64,
    /// Free evolution stops once the remaining energy falls below this
    /// fraction of its initial value.
    pub decay_tol: f64,
    pub max_steps: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings { axial_nodes: 121, steps_per_rate: 40.0, decay_tol: 1e-12, max_steps: 400_000 }
    }
}

/// Fewest RK4 steps per unit of the fastest rate that a run accepts.
pub const MIN_STEPS_PER_RATE: f64 = 20.0;

/// `max(|Γ_S|, |c_abs|·‖B²‖₂)`.
pub fn fastest_rate(coeff: &ModelCoefficients, block: &CouplingBlock) -> Result<f64> {
    let eig = block
        .coupling
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigenvalues of B: {e:?}")))?;
    let top = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(coeff.spin_decay.norm().max(coeff.absorb.norm() * top * top))
}

/// Discretized medium for one block. States are `D × K` matrices with
/// `D = n·(nodes)`, node-major, one column per independent run.
struct Medium {
    n: usize,
    nodes: usize,
    h: f64,
    coeff: ModelCoefficients,
    b: CMat,
    /// `e^{Mh}` and the weights of `S` at the left and right node of a step.
    e: CMat,
    q0: CMat,
    q1: CMat,
    /// `e^{M z̃_j}` for every node.
    powers: Vec<CMat>,
}

impl Medium {
    fn new(params: &ModelParams, coeff: ModelCoefficients, block: &CouplingBlock, nodes: usize) -> Result<Self> {
        if nodes < 3 {
            return Err(Error::invalid("axial_nodes", "need at least 3 nodes"));
        }
        let n = block.len();
        let h = 1.0 / (nodes - 1) as f64;
        let b = to_complex(block.coupling.as_ref());
        let b2 = &b * &b;
        let scale = params.diffraction_scale();
        let m = Mat::from_fn(n, n, |i, j| {
            let diag = if i == j { c64::new(0.0, -block.diffraction[i] * scale) } else { c64::new(0.0, 0.0) };
            diag - coeff.absorb * b2[(i, j)]
        });
        // exp([[Mh, hI, 0], [0, 0, I], [0, 0, 0]]) carries e^{Mh}, hφ₁(Mh), hφ₂(Mh) in its top row.
        let aug = Mat::from_fn(3 * n, 3 * n, |i, j| match (i / n, j / n) {
            (0, 0) => m[(i, j)] * h,
            (0, 1) if i == j - n => c64::new(h, 0.0),
            (1, 2) if i - n == j - 2 * n => c64::new(1.0, 0.0),
            _ => c64::new(0.0, 0.0),
        });
        let big = expm(aug.as_ref());
        let e = big.submatrix(0, 0, n, n).to_owned();
        let phi1 = big.submatrix(0, n, n, n).to_owned();
        let phi2 = big.submatrix(0, 2 * n, n, n).to_owned();
        let lb = Mat::from_fn(n, n, |i, j| -coeff.couple_light * b[(i, j)]);
        let q0 = (&phi1 - &phi2) * &lb;
        let q1 = &phi2 * &lb;
        let mut powers = vec![Mat::identity(n, n)];
        for j in 1..nodes {
            let next = &e * &powers[j - 1];
            powers.push(next);
        }
        Ok(Medium { n, nodes, h, coeff, b, e, q0, q1, powers })
    }

    fn dim(&self) -> usize {
        self.n * self.nodes
    }

    fn node<'a>(&self, x: MatRef<'a, c64>, j: usize) -> MatRef<'a, c64> {
        x.subrows(j * self.n, self.n)
    }

    /// Light field at every node for spin wave `s` and input `a0` at `z̃ = 0`.
    fn light(&self, s: MatRef<'_, c64>, a0: Option<MatRef<'_, c64>>) -> CMat {
        let (n, k) = (self.n, s.ncols());
        let mut a = Mat::<c64>::zeros(self.dim(), k);
        if let Some(a0) = a0 {
            a.as_mut().subrows_mut(0, n).copy_from(a0);
        }
        for j in 0..self.nodes - 1 {
            let next = &self.e * a.as_ref().subrows(j * n, n) + &self.q0 * self.node(s, j) + &self.q1 * self.node(s, j + 1);
            a.as_mut().subrows_mut((j + 1) * n, n).copy_from(&next);
        }
        a
    }

    /// `dS/dt̃ = −Γ_S S − c_S B a`.
    fn rate(&self, s: MatRef<'_, c64>, a0: Option<MatRef<'_, c64>>) -> CMat {
        let a = self.light(s, a0);
        let cb = Mat::from_fn(self.n, self.n, |i, j| self.coeff.couple_spin * self.b[(i, j)]);
        let mut out = Mat::<c64>::zeros(self.dim(), s.ncols());
        for j in 0..self.nodes {
            let v = Mat::from_fn(self.n, s.ncols(), |i, c| -self.coeff.spin_decay * s[(j * self.n + i, c)]) - &cb * self.node(a.as_ref(), j);
            out.as_mut().subrows_mut(j * self.n, self.n).copy_from(&v);
        }
        out
    }

    /// Transpose of `g ↦ (light map)ᵀ g`, i.e. `Zᵀ g` for `a = Z S`.
    fn light_transposed(&self, g: MatRef<'_, c64>) -> CMat {
        let (n, k, last) = (self.n, g.ncols(), self.nodes - 1);
        let mut out = Mat::<c64>::zeros(self.dim(), k);
        let mut mu = self.node(g, last).to_owned();
        for i in (0..=last).rev() {
            // Here `mu` holds μ_i; the update of node i uses μ_i and μ_{i+1}.
            if i >= 1 {
                let v = self.q1.transpose() * &mu;
                let cur = out.as_ref().subrows(i * n, n).to_owned();
                out.as_mut().subrows_mut(i * n, n).copy_from(&(cur + v));
                let v0 = self.q0.transpose() * &mu;
                out.as_mut().subrows_mut((i - 1) * n, n).copy_from(&v0);
                mu = self.node(g, i - 1).to_owned() + self.e.transpose() * &mu;
            }
        }
        debug_assert_eq!(mu.ncols(), k);
        out
    }

    /// `Lᵀ y` for the free-evolution generator `L`.
    fn rate_transposed(&self, y: MatRef<'_, c64>) -> CMat {
        let cb = Mat::from_fn(self.n, self.n, |i, j| self.coeff.couple_spin * self.b[(j, i)]);
        let mut g = Mat::<c64>::zeros(self.dim(), y.ncols());
        for j in 0..self.nodes {
            g.as_mut().subrows_mut(j * self.n, self.n).copy_from(&(&cb * self.node(y, j)));
        }
        let zt = self.light_transposed(g.as_ref());
        Mat::from_fn(self.dim(), y.ncols(), |i, c| -self.coeff.spin_decay * y[(i, c)] - zt[(i, c)])
    }

    /// Light at the exit face, `a(z̃ = 1)`, as a row block of the light map.
    fn exit_rows_transposed(&self) -> CMat {
        let mut g = Mat::<c64>::zeros(self.dim(), self.n);
        for i in 0..self.n {
            g[((self.nodes - 1) * self.n + i, i)] = c64::new(1.0, 0.0);
        }
        self.light_transposed(g.as_ref())
    }

    /// Spin-wave energy `∫dz̃ ‖S‖²` of each column, exact for piecewise-linear `S`.
    fn energy(&self, s: MatRef<'_, c64>) -> Vec<f64> {
        (0..s.ncols())
            .map(|c| {
                let mut e = 0.0;
                for j in 0..self.nodes - 1 {
                    for i in 0..self.n {
                        let (l, r) = (s[(j * self.n + i, c)], s[((j + 1) * self.n + i, c)]);
                        e += (l.norm_sqr() + (l * r.conj()).re + r.norm_sqr()) / 3.0;
                    }
                }
                e * self.h
            })
            .collect()
    }

    fn mirror(&self, s: MatRef<'_, c64>) -> CMat {
        let n = self.n;
        Mat::from_fn(self.dim(), s.ncols(), |r, c| s[((self.nodes - 1 - r / n) * n + r % n, c)])
    }
}

fn axpy(x: MatRef<'_, c64>, k: &CMat, a: f64) -> CMat {
    Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] + k[(i, j)] * a)
}

/// One classical RK4 step of an autonomous linear system.
fn rk4<F: Fn(MatRef<'_, c64>) -> CMat>(f: &F, x: &CMat, dt: f64) -> CMat {
    let k1 = f(x.as_ref());
    let k2 = f(axpy(x.as_ref(), &k1, dt / 2.0).as_ref());
    let k3 = f(axpy(x.as_ref(), &k2, dt / 2.0).as_ref());
    let k4 = f(axpy(x.as_ref(), &k3, dt).as_ref());
    Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] + (k1[(i, j)] + k2[(i, j)] * 2.0 + k3[(i, j)] * 2.0 + k4[(i, j)]) * (dt / 6.0))
}

fn time_step(coeff: &ModelCoefficients, block: &CouplingBlock, settings: &OracleSettings) -> Result<f64> {
    if !(settings.steps_per_rate >= MIN_STEPS_PER_RATE) {
        return Err(Error::Resolution(format!(
            "{} steps per unit rate is below the minimum of {MIN_STEPS_PER_RATE}",
            settings.steps_per_rate
        )));
    }
    Ok(1.0 / (settings.steps_per_rate * fastest_rate(coeff, block)?))
}

fn unstable(dt: f64) -> Error {
    Error::Resolution(format!("time step {dt} is unstable: spin-wave energy grew; refine the time grid"))
}

/// Input envelope per mode on a uniform grid ending at `t̃ = 0`.
///
/// Samples are spaced by half an RK4 step, so their count is odd.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPulse {
    pub spacing: f64,
    /// `samples[k]` is the envelope at `t̃ = −(len − 1 − k)·spacing`.
    pub samples: Vec<Vec<c64>>,
}

impl InputPulse {
    /// Samples `f(t̃)` on `[−duration, 0]` with half-step `spacing`.
    pub fn sample<F: Fn(f64) -> Vec<c64>>(duration: f64, spacing: f64, f: F) -> Self {
        let steps = (duration / (2.0 * spacing)).ceil() as usize;
        let len = 2 * steps + 1;
        let samples = (0..len).map(|k| f(-((len - 1 - k) as f64) * spacing)).collect();
        InputPulse { spacing, samples }
    }

    /// `∫dt̃ ‖a_in‖²` by Simpson's rule.
    pub fn energy(&self) -> f64 {
        let last = self.samples.len() - 1;
        let sum: f64 = self
            .samples
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let w = if k == 0 || k == last { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                w * s.iter().map(|x| x.norm_sqr()).sum::<f64>()
            })
            .sum();
        sum * self.spacing / 3.0
    }
}

/// Spin wave at the end of storage, node-major (`n` amplitudes per node).
#[derive(Debug, Clone, PartialEq)]
pub struct SpinWave {
    pub axial_nodes: usize,
    pub modes: usize,
    pub values: Vec<c64>,
}

impl SpinWave {
    fn column(&self) -> CMat {
        Mat::from_fn(self.values.len(), 1, |i, _| self.values[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageResult {
    pub spin_wave: SpinWave,
    /// `∫dz̃ ‖S‖²`.
    pub stored_energy: f64,
    pub input_energy: f64,
    /// Stored over input energy.
    pub efficiency: f64,
}

/// Stores `pulse` with the drive on, ending at `t̃ = 0`.
pub fn integrate_storage(
    params: &ModelParams,
    block: &CouplingBlock,
    pulse: &InputPulse,
    settings: &OracleSettings,
) -> Result<StorageResult> {
    let coeff = params.coefficients()?;
    if pulse.samples.len() % 2 == 0 || pulse.samples.iter().any(|s| s.len() != block.len()) {
        return Err(Error::invalid("input_pulse", "need an odd number of samples with one amplitude per mode"));
    }
    let dt = 2.0 * pulse.spacing;
    let limit = time_step(&coeff, block, settings)?;
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Resolution(format!("pulse sampling implies a time step {dt} above the limit {limit}")));
    }
    let medium = Medium::new(params, coeff, block, settings.axial_nodes)?;
    let n = block.len();
    let input = |k: usize| Mat::from_fn(n, 1, |i, _| pulse.samples[k][i]);
    let mut s = Mat::<c64>::zeros(medium.dim(), 1);
    let mut fed = 0.0;
    for step in 0..(pulse.samples.len() - 1) / 2 {
        let (a0, a1, a2) = (input(2 * step), input(2 * step + 1), input(2 * step + 2));
        let k1 = medium.rate(s.as_ref(), Some(a0.as_ref()));
        let k2 = medium.rate(axpy(s.as_ref(), &k1, dt / 2.0).as_ref(), Some(a1.as_ref()));
        let k3 = medium.rate(axpy(s.as_ref(), &k2, dt / 2.0).as_ref(), Some(a1.as_ref()));
        let k4 = medium.rate(axpy(s.as_ref(), &k3, dt).as_ref(), Some(a2.as_ref()));
        s = Mat::from_fn(s.nrows(), 1, |i, j| s[(i, j)] + (k1[(i, j)] + k2[(i, j)] * 2.0 + k3[(i, j)] * 2.0 + k4[(i, j)]) * (dt / 6.0));
        fed += dt / 6.0 * [&a0, &a1, &a1, &a2].iter().map(|a| a.squared_norm_l2()).sum::<f64>();
        let e = medium.energy(s.as_ref())[0];
        if !e.is_finite() || e > fed * (1.0 + 1e-6) + 1e-12 {
            return Err(unstable(dt));
        }
    }
    let stored_energy = medium.energy(s.as_ref())[0];
    let input_energy = pulse.energy();
    let efficiency = if input_energy > 0.0 { stored_energy / input_energy } else { 0.0 };
    let values = (0..s.nrows()).map(|i| s[(i, 0)]).collect();
    Ok(StorageResult { spin_wave: SpinWave { axial_nodes: settings.axial_nodes, modes: n, values }, stored_energy, input_energy, efficiency })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    /// Sample times, starting at `t̃ = 0` (end of storage).
    pub times: Vec<f64>,
    /// `a(z̃ = 1, t̃)` per sample and mode.
    pub output: Vec<Vec<c64>>,
    /// `∫dt̃ ‖a_out‖²` (trapezoid).
    pub output_energy: f64,
}

/// Reads out `spin_wave` after a dark interval (drive off) of length
/// `dark_time`, running until the spin wave is exhausted.
pub fn integrate_retrieval(
    params: &ModelParams,
    block: &CouplingBlock,
    spin_wave: &SpinWave,
    direction: Direction,
    dark_time: f64,
    settings: &OracleSettings,
) -> Result<RetrievalResult> {
    let coeff = params.coefficients()?;
    if spin_wave.modes != block.len() || spin_wave.axial_nodes != settings.axial_nodes {
        return Err(Error::invalid("spin_wave", "shape does not match the block and axial grid"));
    }
    let dt = time_step(&coeff, block, settings)?;
    let medium = Medium::new(params, coeff, block, settings.axial_nodes)?;
    let mut s = match direction {
        Direction::Forward => spin_wave.column(),
        Direction::Backward => medium.mirror(spin_wave.column().as_ref()),
    };
    let exit = (medium.nodes - 1) * medium.n;
    let out_of = |a: &CMat| (0..medium.n).map(|i| a[(exit + i, 0)]).collect::<Vec<c64>>();
    let (mut times, mut output) = (Vec::new(), Vec::new());
    // Dark interval: no control field, so no coupling and no output.
    let dark = ModelCoefficients { couple_light: c64::new(0.0, 0.0), couple_spin: c64::new(0.0, 0.0), spin_decay: c64::new(0.0, 0.0), ..coeff };
    let dark_medium = Medium::new(params, dark, block, settings.axial_nodes)?;
    let dark_steps = (dark_time / dt).round() as usize;
    for k in 0..dark_steps {
        times.push(k as f64 * dt);
        output.push(out_of(&dark_medium.light(s.as_ref(), None)));
    }
    let initial = medium.energy(s.as_ref())[0];
    let mut previous = initial;
    let mut step = 0;
    loop {
        times.push(dark_time + step as f64 * dt);
        output.push(out_of(&medium.light(s.as_ref(), None)));
        if previous <= settings.decay_tol * initial || initial == 0.0 {
            break;
        }
        if step == settings.max_steps {
            return Err(Error::Resolution(format!("spin wave not exhausted after {step} steps")));
        }
        s = rk4(&|x| medium.rate(x, None), &s, dt);
        let e = medium.energy(s.as_ref())[0];
        if !e.is_finite() || e > previous * (1.0 + 1e-6) + 1e-300 {
            return Err(unstable(dt));
        }
        previous = e;
        step += 1;
    }
    let last = output.len() - 1;
    let output_energy = output
        .iter()
        .enumerate()
        .filter(|(k, _)| *k >= dark_steps)
        .map(|(k, a)| {
            let w = if k == dark_steps || k == last { 0.5 } else { 1.0 };
            w * dt * a.iter().map(|x| x.norm_sqr()).sum::<f64>()
        })
        .sum();
    Ok(RetrievalResult { times, output, output_energy })
}

/// A complete store-then-retrieve run.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDomainRun {
    pub storage: StorageResult,
    pub retrieval: RetrievalResult,
    /// Stored over input energy.
    pub storage_efficiency: f64,
    /// Output over input energy.
    pub total_efficiency: f64,
}

pub fn store_and_retrieve(
    params: &ModelParams,
    block: &CouplingBlock,
    pulse: &InputPulse,
    direction: Direction,
    dark_time: f64,
    settings: &OracleSettings,
) -> Result<TimeDomainRun> {
    let storage = integrate_storage(params, block, pulse, settings)?;
    let retrieval = integrate_retrieval(params, block, &storage.spin_wave, direction, dark_time, settings)?;
    let total_efficiency = if storage.input_energy > 0.0 { retrieval.output_energy / storage.input_energy } else { 0.0 };
    Ok(TimeDomainRun { storage_efficiency: storage.efficiency, total_efficiency, storage, retrieval })
}

/// Accumulates `Σ_k w_k x_k x_k†` over trapezoid-weighted snapshots.
struct Gram {
    sum: CMat,
    batch: Vec<(f64, CMat)>,
}

impl Gram {
    fn new(dim: usize) -> Self {
        Gram { sum: Mat::zeros(dim, dim), batch: Vec::new() }
    }

    fn push(&mut self, weight: f64, x: &CMat) {
        self.batch.push((weight, x.clone()));
        if self.batch.len() == 64 {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.batch.is_empty() {
            return;
        }
        let k = self.batch[0].1.ncols();
        let a = Mat::from_fn(self.sum.nrows(), k * self.batch.len(), |i, j| {
            let (w, x) = &self.batch[j / k];
            x[(i, j % k)] * w.sqrt()
        });
        self.sum += &a * a.adjoint();
        self.batch.clear();
    }

    fn finish(mut self) -> CMat {
        self.flush();
        self.sum
    }
}

/// Runs `x ← step(x)` until its energy decays below `decay_tol`, feeding
/// trapezoid-weighted snapshots to `gram`.
fn accumulate<F: Fn(&CMat) -> CMat>(
    medium: &Medium,
    start: CMat,
    step: F,
    dt: f64,
    settings: &OracleSettings,
    monotone: bool,
) -> Result<CMat> {
    let mut gram = Gram::new(medium.dim());
    let initial: f64 = medium.energy(start.as_ref()).iter().sum();
    let mut x = start;
    let mut previous = initial;
    let mut k = 0;
    loop {
        let energy: f64 = medium.energy(x.as_ref()).iter().sum();
        if !energy.is_finite() || (monotone && energy > previous * (1.0 + 1e-6) + 1e-300) {
            return Err(unstable(dt));
        }
        previous = energy;
        let done = energy <= settings.decay_tol * initial;
        gram.push(if k == 0 || done { 0.5 * dt } else { dt }, &x);
        if done {
            return Ok(gram.finish());
        }
        if k == settings.max_steps {
            return Err(Error::Resolution(format!("response not decayed after {k} steps; raise max_steps")));
        }
        x = step(&x);
        k += 1;
    }
}

/// Efficiencies of the time-domain storage → retrieval map (descending),
/// with retrieval starting right after storage.
pub fn time_domain_spectrum(
    params: &ModelParams,
    block: &CouplingBlock,
    direction: Direction,
    settings: &OracleSettings,
) -> Result<Vec<f64>> {
    let coeff = params.coefficients()?;
    let dt = time_step(&coeff, block, settings)?;
    let medium = Medium::new(params, coeff, block, settings.axial_nodes)?;
    let n = medium.n;
    // Spin wave left by a unit impulse in each mode: −c_S B e^{M z̃_j}.
    let mut impulse = Mat::<c64>::zeros(medium.dim(), n);
    for j in 0..medium.nodes {
        let v = Mat::from_fn(n, n, |r, c| -coeff.couple_spin * medium.b[(r, c)]) * &medium.powers[j];
        impulse.as_mut().subrows_mut(j * n, n).copy_from(&v);
    }
    // Storage responses G(τ) = P^τ·impulse span the stored spin waves.
    let storage = accumulate(&medium, impulse, |x| rk4(&|y| medium.rate(y, None), x, dt), dt, settings, true)?;
    // Output functionals: rows of C P^k, carried as columns of (Pᵀ)^k Cᵀ.
    let exit = medium.exit_rows_transposed();
    let outputs = accumulate(&medium, exit, |x| rk4(&|y| medium.rate_transposed(y), x, dt), dt, settings, false)?;
    // T = X·Mir·Y: its nonzero σ² are the eigenvalues of
    // √G_X · Mir G_Y Mirᵀ · √G_X with G_X = Σ X_k†X_k = conj(outputs).
    let gx = Mat::from_fn(outputs.nrows(), outputs.ncols(), |i, j| outputs[(i, j)].conj());
    let gy = match direction {
        Direction::Forward => storage,
        Direction::Backward => {
            let (n, last) = (medium.n, medium.nodes - 1);
            let flip = |r: usize| (last - r / n) * n + r % n;
            Mat::from_fn(storage.nrows(), storage.ncols(), |i, j| storage[(flip(i), flip(j))])
        }
    };
    let eig = gx.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Numerical(format!("Gram eigendecomposition: {e:?}")))?;
    let u = eig.U();
    let lam = eig.S().column_vector();
    let root = Mat::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)] * lam[j].re.max(0.0).sqrt()) * u.adjoint();
    let h = &root * &gy * &root;
    let herm = Mat::from_fn(h.nrows(), h.ncols(), |i, j| (h[(i, j)] + h[(j, i)].conj()) * 0.5);
    let mut values: Vec<f64> = herm
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("oracle spectrum: {e:?}")))?
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Leading efficiency from two resolutions, extrapolated assuming
/// second-order convergence in `(Δt̃, Δz̃)`.
pub fn richardson_leading(
    params: &ModelParams,
    block: &CouplingBlock,
    direction: Direction,
    settings: &OracleSettings,
) -> Result<(f64, f64)> {
    let coarse = time_domain_spectrum(params, block, direction, settings)?[0];
    let fine_settings = OracleSettings {
        axial_nodes: 2 * settings.axial_nodes - 1,
        steps_per_rate: 2.0 * settings.steps_per_rate,
        ..*settings
    };
    let fine = time_domain_spectrum(params, block, direction, &fine_settings)?[0];
    Ok(((4.0 * fine - coarse) / 3.0, (fine - coarse).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_basis, coupling_block, default_quad_order};
    use crate::params::Resolution;

    fn block(n: usize) -> CouplingBlock {
        let res = Resolution { n_radial_max: n, ..Default::default() };
        let basis = build_basis(0, &res).unwrap();
        coupling_block(&basis, default_quad_order(&basis)).unwrap()
    }

    fn params(depth: f64, fresnel: f64) -> ModelParams {
        ModelParams::new(depth, fresnel).unwrap().with_drive(c64::new(depth.sqrt(), 0.0)).unwrap()
    }

    #[test]
    fn transposed_generator_is_the_transpose() {
        let p = params(10.0, 1.0);
        let blk = block(2);
        let medium = Medium::new(&p, p.coefficients().unwrap(), &blk, 7).unwrap();
        let d = medium.dim();
        let ident = Mat::<c64>::identity(d, d);
        let l = medium.rate(ident.as_ref(), None);
        let lt = medium.rate_transposed(ident.as_ref());
        assert!((&l.transpose() - &lt).norm_l2() < 1e-12 * l.norm_l2());
    }

    #[test]
    fn zero_input_stores_nothing() {
        let p = params(10.0, 1.0);
        let blk = block(2);
        let pulse = InputPulse::sample(1.0, 0.001, |_| vec![c64::new(0.0, 0.0); 2]);
        let out = integrate_storage(&p, &blk, &pulse, &OracleSettings::default()).unwrap();
        assert_eq!(out.efficiency, 0.0);
        assert!(out.spin_wave.values.iter().all(|v| v.norm() == 0.0));
        let r = integrate_retrieval(&p, &blk, &out.spin_wave, Direction::Forward, 0.0, &OracleSettings::default()).unwrap();
        assert_eq!(r.output_energy, 0.0);
    }

    #[test]
    fn coarse_time_grid_is_rejected() {
        let p = params(10.0, 1.0);
        let blk = block(1);
        let settings = OracleSettings { steps_per_rate: 5.0, ..Default::default() };
        assert!(matches!(time_domain_spectrum(&p, &blk, Direction::Forward, &settings), Err(Error::Resolution(_))));
    }

    #[test]
    fn output_is_dark_before_the_drive_returns() {
        let p = params(10.0, 1.0);
        let blk = block(2);
        let settings = OracleSettings { axial_nodes: 41, ..Default::default() };
        let dt = 1.0 / (settings.steps_per_rate * fastest_rate(&p.coefficients().unwrap(), &blk).unwrap());
        let pulse = InputPulse::sample(3.0, dt / 2.0, |t| vec![c64::new((-(t + 1.5).powi(2) * 4.0).exp(), 0.0), c64::new(0.0, 0.0)]);
        let run = store_and_retrieve(&p, &blk, &pulse, Direction::Forward, 0.5, &settings).unwrap();
        for (t, a) in run.retrieval.times.iter().zip(&run.retrieval.output) {
            if *t < 0.5 - 1e-9 {
                assert!(a.iter().all(|x| x.norm() <= 1e-10));
            }
        }
        assert!(run.total_efficiency > 0.0 && run.total_efficiency <= run.storage_efficiency);
        assert!(run.storage_efficiency <= 1.0 + 1e-6);
    }
}
