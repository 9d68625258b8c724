//! Kernel pipeline against direct time-domain integration of the
//! light–spin equations.

use qmem_core::engine::block_for;
use qmem_core::oracle::{integrate_storage, richardson_leading, time_domain_spectrum, InputPulse, OracleSettings};
use qmem_core::spectrum::block_spectrum;
use qmem_core::*;

fn params(depth: f64, fresnel: f64) -> ModelParams {
    ModelParams::new(depth, fresnel).unwrap().with_drive(c64::new(depth.sqrt(), 0.0)).unwrap()
}

fn pipeline_leading(p: &ModelParams, n_radial: usize, m: u32, direction: Direction) -> f64 {
    let res = Resolution { n_radial_max: n_radial, n_freq: 64, ..Default::default() };
    let block = block_for(m, &res).unwrap();
    block_spectrum(&memory_map(p, &block, &res, direction).unwrap()).unwrap().leading()
}

#[test]
fn leading_efficiency_matches_time_domain() {
    let coarse = OracleSettings { axial_nodes: 41, steps_per_rate: 20.0, ..Default::default() };
    for (depth, fresnel, n_radial, m) in [(10.0, 1.0, 2, 0), (10.0, 0.5, 2, 1), (30.0, 1e6, 2, 0)] {
        let p = params(depth, fresnel);
        let res = Resolution { n_radial_max: n_radial, ..Default::default() };
        let block = block_for(m, &res).unwrap();
        for direction in Direction::BOTH {
            let expected = pipeline_leading(&p, n_radial, m, direction);
            let (oracle, spread) = richardson_leading(&p, &block, direction, &coarse).unwrap();
            assert!(spread < 1e-3, "{direction}: oracle not resolved ({spread:e})");
            assert!(
                (oracle - expected).abs() < 1e-4,
                "d = {depth}, F = {fresnel}, m = {m}, {direction}: oracle {oracle} vs pipeline {expected}"
            );
        }
    }
}

#[test]
fn subleading_efficiencies_also_agree() {
    let p = params(10.0, 1.0);
    let res = Resolution { n_radial_max: 2, n_freq: 64, ..Default::default() };
    let block = block_for(0, &res).unwrap();
    let settings = OracleSettings { axial_nodes: 81, steps_per_rate: 40.0, ..Default::default() };
    let oracle = time_domain_spectrum(&p, &block, Direction::Forward, &settings).unwrap();
    let pipe = block_spectrum(&memory_map(&p, &block, &res, Direction::Forward).unwrap()).unwrap();
    for k in 0..2 {
        assert!((oracle[k] - pipe.efficiencies[k]).abs() < 1e-3, "mode {k}: {} vs {}", oracle[k], pipe.efficiencies[k]);
    }
}

#[test]
fn gaussian_pulse_storage_matches_storage_map() {
    let p = params(10.0, 1e6);
    let res = Resolution { n_radial_max: 1, n_freq: 128, n_axial: 64, ..Default::default() };
    let block = block_for(0, &res).unwrap();
    let coeff = p.coefficients().unwrap();
    let settings = OracleSettings { axial_nodes: 201, steps_per_rate: 40.0, ..Default::default() };
    let dt = 1.0 / (settings.steps_per_rate * oracle::fastest_rate(&coeff, &block).unwrap());

    let (centre, width) = (-0.2, 0.05);
    let envelope = |t: f64| (-(t - centre) * (t - centre) / (2.0 * width * width)).exp();
    let pulse = InputPulse::sample(-centre + 8.0 * width, dt / 2.0, |t| vec![c64::new(envelope(t), 0.0)]);
    let stored = integrate_storage(&p, &block, &pulse, &settings).unwrap();

    // â(ν) = (2π)^{-1/2} ∫ e^{-iνt} a(t) dt, closed form for a Gaussian.
    let grid = QuadratureGrid::new(&res, &coeff).unwrap();
    let s = storage_map(&p, &block, &grid).unwrap();
    let x = faer::Mat::from_fn(grid.n_freq(), 1, |i, _| {
        let nu = grid.freq_nodes[i];
        c64::new(0.0, -nu * centre).exp() * width * (-(nu * width).powi(2) / 2.0).exp() * grid.freq_weights[i]
    });
    let spin = &s * &x;
    let energy: f64 = (0..grid.axial_nodes.len()).map(|j| grid.axial_weights[j] * spin[(j, 0)].norm_sqr()).sum();
    let expected = energy / (width * std::f64::consts::PI.sqrt());

    assert!(expected > 0.01);
    assert!((stored.efficiency - expected).abs() < 1e-4, "oracle {} vs map {expected}", stored.efficiency);
}
