// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::{BTreeMap, VecDeque};

use common::{pattern_oracle, piece_copy, random_copy_case};
use idma_core::config::{FrontendConfig, SimConfig, Workload};
use idma_core::memsys::MemPreset;
use idma_core::midend::{Boundary, MidendSpec};
use idma_core::presets::{load_preset, PRESETS};
use idma_core::{
    simulate, BackendOptions, Direction, InitPattern, PortConfig, ProtocolId, RunOptions, Side, SimConfigError,
    TraceEvent, TraceKind, TransferDescriptor1D,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Payload over `[first address request, last data response]`, from the
/// trace alone.
fn trace_utilization(trace: &[TraceEvent], bus_bytes: u64, lanes: usize) -> f64 {
    let be: Vec<_> = trace.iter().filter(|e| e.unit.starts_with("be")).collect();
    let first = be.iter().filter(|e| matches!(e.event, TraceKind::Ar | TraceKind::Aw)).map(|e| e.cycle).min();
    let last = be.iter().filter(|e| matches!(e.event, TraceKind::R | TraceKind::B)).map(|e| e.cycle).max();
    let payload: u64 = be.iter().filter(|e| e.event == TraceKind::Done).map(|e| e.length).sum();
    match (first, last) {
        (Some(a), Some(b)) => payload as f64 / ((b - a + 1) as f64 * bus_bytes as f64 * lanes as f64),
        _ => 0.0,
    }
}

#[test]
fn reported_utilization_matches_trace() {
    let mut cfgs: Vec<SimConfig> = PRESETS.iter().map(|(n, _)| load_preset(n).unwrap().unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    cfgs.extend((0..30).map(|_| random_copy_case(&mut rng).cfg));
    for cfg in &cfgs {
        let out = simulate(cfg, 1, RunOptions::default()).unwrap();
        let r = &out.report;
        let want = trace_utilization(&out.trace, u64::from(cfg.engine.dw / 8), r.backends);
        assert!((r.utilization - want).abs() < 1e-12, "{:?}: {} vs {want}", cfg.name, r.utilization);
    }
}

/// Replays a single-port trace and tracks outstanding bursts per side.
fn max_outstanding(trace: &[TraceEvent]) -> (usize, usize) {
    let mut reads: VecDeque<u64> = VecDeque::new();
    let mut got = 0u64;
    let mut writes = 0usize;
    let (mut max_r, mut max_w) = (0, 0);
    for e in trace.iter().filter(|e| e.unit == "be0") {
        match e.event {
            TraceKind::Ar => reads.push_back(e.length),
            TraceKind::R => {
                got += e.length;
                while reads.front().is_some_and(|&l| l <= got) {
                    got -= reads.pop_front().unwrap();
                }
            }
            TraceKind::Aw => writes += 1,
            TraceKind::B => writes -= 1,
            _ => {}
        }
        max_r = max_r.max(reads.len());
        max_w = max_w.max(writes);
    }
    (max_r, max_w)
}

#[test]
fn outstanding_bursts_respect_credits() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let preset = MemPreset::ALL[rng.random_range(0..3)];
        let nax = rng.random_range(1..=32);
        let dw = 8 << rng.random_range(0..5);
        let piece = 1 << rng.random_range(0..10);
        let mut cfg = piece_copy(dw, nax, preset, 8192, piece);
        cfg.engine.nax_write = rng.random_range(1..=32);
        let m = cfg.memory[0].timing().unwrap().max_outstanding as usize;
        let out = simulate(&cfg, 3, RunOptions::default()).unwrap();
        let (r, w) = max_outstanding(&out.trace);
        assert!(r <= (nax as usize).min(m), "reads {r} > nax {nax} / M {m}");
        assert!(w <= (cfg.engine.nax_write as usize).min(m), "writes {w} > nax {} / M {m}", cfg.engine.nax_write);
        assert!(r >= 1 && w >= 1);
    }
}

#[test]
fn descriptor_frontend_fetches_whole_chain() {
    let cfg = load_preset("cheshire").unwrap().unwrap();
    let n = cfg.workload.transfers().unwrap().len() as u64;
    let out = simulate(&cfg, 2, RunOptions::default()).unwrap();
    let r = &out.report;
    let fetch = r.ports.iter().find(|p| p.backend.is_none()).expect("fetch port");
    assert_eq!(fetch.counters.read_bytes, 40 * n);
    assert_eq!(out.trace.iter().filter(|e| e.event == TraceKind::Desc).count() as u64, n);
    assert_eq!(r.launches.len() as u64, n);
    let total = cfg.workload.total_bytes();
    let m = &out.memories["axi"];
    let Workload::Pieces(p) = &cfg.workload else { panic!("piece workload") };
    assert_eq!(m.read(p.src, total).unwrap(), m.read(p.dst, total).unwrap());
}

#[test]
fn register_frontend_status_tracks_completion() {
    let cfg = load_preset("pulp").unwrap().unwrap();
    let out = simulate(&cfg, 2, RunOptions::default()).unwrap();
    assert_eq!(out.report.last_completed_id, out.report.launches.len() as u64);
    assert!(out.report.launches.iter().all(|l| l.completed.is_some()));
    // eleven register accesses per launch, the 11th launches
    assert_eq!(out.report.launches[0].cycle, 10);
}

#[test]
fn register_frontend_rejects_unencodable_options() {
    let mut cfg = load_preset("pulp").unwrap().unwrap();
    let Workload::Pieces(p) = &mut cfg.workload else { panic!("piece workload") };
    p.options.user_burst_cap = Some(64);
    assert!(matches!(cfg.check(), Err(SimConfigError::Frontend(_))));
}

#[test]
fn missing_legalizer_is_a_contract_violation() {
    let mut cfg = piece_copy(64, 4, MemPreset::Sram, 8192, 8192);
    cfg.engine.has_legalizer = false;
    let err = simulate(&cfg, 0, RunOptions::default()).unwrap_err();
    assert!(err.is_contract_violation(), "{err}");
    // a transfer within one page is fine
    let cfg = piece_copy(64, 4, MemPreset::Sram, 1024, 1024);
    let mut cfg2 = cfg.clone();
    cfg2.engine.has_legalizer = false;
    simulate(&cfg2, 0, RunOptions::default()).unwrap();
}

#[test]
fn init_pattern_continues_across_split_pieces() {
    for pattern in [InitPattern::Increment { start: 3 }, InitPattern::Pseudorandom { seed: 0xFEED }] {
        let mut cfg = piece_copy(32, 4, MemPreset::Sram, 4096, 4096);
        cfg.engine.ports.push(PortConfig::new(ProtocolId::Init, Direction::Read));
        cfg.midends = vec![MidendSpec::MpSplit { boundary: Boundary::new(64).unwrap(), side: Side::Write }];
        let opts = BackendOptions { init_pattern: pattern, ..Default::default() };
        let t = TransferDescriptor1D::new(0, 0x813, 1000, ProtocolId::Init)
            .with_protocols(ProtocolId::Init, ProtocolId::Axi)
            .with_options(opts);
        cfg.workload = Workload::Transfers { transfers: vec![t.into()] };
        let out = simulate(&cfg, 0, RunOptions::default()).unwrap();
        assert!(out.report.launches[0].transfers > 10);
        assert_eq!(out.memories["axi"].read(0x813, 1000).unwrap(), pattern_oracle(pattern, 1000));
    }
}

#[test]
fn frontends_agree_on_results() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let case = random_copy_case(&mut rng);
        let mut by_fe = BTreeMap::new();
        for fe in [FrontendConfig::Direct { start: 0 }, FrontendConfig::Inst { start: 0 }] {
            let mut cfg = case.cfg.clone();
            cfg.frontend = fe;
            let out = simulate(&cfg, 9, RunOptions::default()).unwrap();
            by_fe.insert(format!("{:?}", cfg.frontend), out.memories[&case.dst_port].bytes().to_vec());
        }
        let v: Vec<_> = by_fe.values().collect();
        assert_eq!(v[0], v[1]);
    }
}
