// SPDX-License-Identifier: Apache-2.0

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use idma_bench::{linear_samples, piece_copy};
use idma_core::costmodel::{estimate_area, fit_nnls};
use idma_core::memsys::MemPreset;
use idma_core::presets::load_preset;
use idma_core::{legalize_side, simulate, EngineConfig, ProtocolId, RunOptions, Side};

fn simulation(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    let opts = RunOptions { trace: false, ..RunOptions::default() };
    for piece in [4u64, 64, 1024] {
        let cfg = piece_copy(8, MemPreset::Hbm, 64 * 1024, piece);
        g.throughput(Throughput::Bytes(64 * 1024));
        g.bench_with_input(BenchmarkId::new("hbm_piece", piece), &cfg, |b, cfg| {
            b.iter(|| simulate(black_box(cfg), 0, opts).unwrap())
        });
    }
    let mempool = load_preset("mempool").unwrap().unwrap();
    g.bench_function("mempool_preset", |b| b.iter(|| simulate(black_box(&mempool), 0, opts).unwrap()));
    g.finish();
}

fn legalizer(c: &mut Criterion) {
    let mut g = c.benchmark_group("legalize_side");
    for p in [ProtocolId::Axi, ProtocolId::Obi, ProtocolId::TileLinkUH] {
        g.bench_function(p.as_str(), |b| {
            b.iter(|| legalize_side(black_box(0xF03), 65_536, p, Side::Read, 64, None))
        });
    }
    g.finish();
}

fn cost_models(c: &mut Criterion) {
    let cfg = EngineConfig::base(32);
    c.bench_function("estimate_area", |b| b.iter(|| estimate_area(black_box(&cfg)).unwrap()));
    let samples = linear_samples(200, 11);
    c.bench_function("fit_nnls_200x11", |b| b.iter(|| fit_nnls(black_box(&samples)).unwrap()));
}

criterion_group!(benches, simulation, legalizer, cost_models);
criterion_main!(benches);
