use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qmem_bench::{block, oracle_params, params, resolution};
use qmem_core::oracle::{time_domain_spectrum, OracleSettings};
use qmem_core::{block_spectrum, kernel_slice, memory_map, Direction};

fn propagator(c: &mut Criterion) {
    let p = params(40.0, 1.0);
    let coeff = p.coefficients().unwrap();
    let nodes = [0.25, 0.5, 0.75];
    let mut g = c.benchmark_group("kernel_slice");
    for n in [8, 24, 48] {
        let blk = block(0, &resolution(n, 32));
        g.bench_with_input(BenchmarkId::from_parameter(n), &blk, |b, blk| {
            b.iter(|| kernel_slice(&coeff, blk, p.fresnel, black_box(0.37), &nodes).unwrap())
        });
    }
    g.finish();
}

fn maps(c: &mut Criterion) {
    let p = params(40.0, 1.0);
    let mut g = c.benchmark_group("memory_map");
    g.sample_size(10);
    for n in [8, 16, 32] {
        let res = resolution(n, 32);
        let blk = block(0, &res);
        for direction in Direction::BOTH {
            g.bench_with_input(BenchmarkId::new(direction.as_str(), n), &blk, |b, blk| {
                b.iter(|| memory_map(&p, blk, &res, direction).unwrap())
            });
        }
    }
    g.finish();
}

fn spectra(c: &mut Criterion) {
    let p = params(40.0, 1.0);
    let mut g = c.benchmark_group("block_spectrum");
    g.sample_size(10);
    for n in [8, 16, 32] {
        let res = resolution(n, 32);
        let map = memory_map(&p, &block(0, &res), &res, Direction::Forward).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &map, |b, map| b.iter(|| block_spectrum(map).unwrap()));
    }
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let p = oracle_params(10.0, 1.0);
    let blk = block(0, &resolution(2, 32));
    let settings = OracleSettings { axial_nodes: 41, steps_per_rate: 20.0, ..Default::default() };
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    g.bench_function("time_domain_spectrum", |b| {
        b.iter(|| time_domain_spectrum(&p, &blk, Direction::Forward, &settings).unwrap())
    });
    g.finish();
}

criterion_group!(benches, propagator, maps, spectra, oracle);
criterion_main!(benches);
