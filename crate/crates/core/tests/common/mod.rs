// SPDX-License-Identifier: Apache-2.0

//! Test-side oracles shared by the integration and acceptance targets.
//! Nothing here calls into the library's own rule implementations.

#![allow(dead_code)]

use idma_core::config::{FrontendConfig, MemoryConfig, SimConfig, Workload};
use idma_core::memsys::MemPreset;
use idma_core::midend::{Boundary, MidendSpec};
use idma_core::{
    BackendOptions, Direction, EngineConfig, InitPattern, LegalBurst, NdTransferDescriptor, PortConfig,
    ProtocolId, Side, TransferDescriptor1D,
};
use rand::seq::IndexedRandom;
use rand::Rng;

/// Independent legality rule per protocol.
pub fn burst_is_legal(p: ProtocolId, addr: u64, len: u64, dw: u32, cap: Option<u64>) -> bool {
    let bb = u64::from(dw / 8).max(1);
    if len == 0 || cap.is_some_and(|c| len > c) {
        return false;
    }
    let last = addr + len - 1;
    match p {
        ProtocolId::Axi => {
            let beats = (addr % bb + len).div_ceil(bb);
            len <= 4096 && addr / 4096 == last / 4096 && beats <= 256
        }
        ProtocolId::AxiLite | ProtocolId::Obi | ProtocolId::TileLinkUL => addr / bb == last / bb,
        ProtocolId::TileLinkUH => len.is_power_of_two() && addr.is_multiple_of(len),
        ProtocolId::AxiStream | ProtocolId::Init => true,
    }
}

/// Checks that `bursts` tile `[addr, addr + len)` once, in order.
pub fn tiles_exactly(bursts: &[LegalBurst], addr: u64, len: u64) -> Result<(), String> {
    let mut covered = vec![0u8; len as usize];
    let mut prev: Option<(u32, u64)> = None;
    for b in bursts {
        if let Some((seq, a)) = prev {
            if b.seq <= seq || b.addr <= a {
                return Err(format!("order broken at seq {}", b.seq));
            }
        }
        prev = Some((b.seq, b.addr));
        if b.addr < addr || b.addr + b.length > addr + len {
            return Err(format!("burst {:#x}+{} outside range", b.addr, b.length));
        }
        for i in b.addr - addr..b.addr - addr + b.length {
            covered[i as usize] += 1;
        }
    }
    match covered.iter().position(|&c| c != 1) {
        Some(i) => Err(format!("byte {:#x} covered {} times", addr + i as u64, covered[i])),
        None => Ok(()),
    }
}

/// Reference pattern bytes.
pub fn pattern_oracle(p: InitPattern, len: usize) -> Vec<u8> {
    match p {
        InitPattern::Constant { value } => vec![value; len],
        InitPattern::Increment { start } => (0..len).map(|i| ((start as usize + i) % 256) as u8).collect(),
        InitPattern::Pseudorandom { seed } => {
            let mut x = seed;
            let mut out = Vec::new();
            while out.len() < len {
                x ^= x << 13;
                x ^= x >> 7;
                x ^= x << 17;
                for k in 0..8 {
                    out.push((x >> (8 * k)) as u8);
                }
            }
            out.truncate(len);
            out
        }
    }
}

pub const REGION: u64 = 1 << 17;

/// A randomized copy scenario.
#[derive(Debug, Clone)]
pub struct CopyCase {
    pub cfg: SimConfig,
    pub src_port: String,
    pub dst_port: String,
    pub transfers: Vec<TransferDescriptor1D>,
}

const WRITABLE: [ProtocolId; 6] = [
    ProtocolId::Axi,
    ProtocolId::AxiLite,
    ProtocolId::AxiStream,
    ProtocolId::Obi,
    ProtocolId::TileLinkUL,
    ProtocolId::TileLinkUH,
];

fn memory(port: &str, rng: &mut impl Rng, size: u64) -> MemoryConfig {
    let mut m = MemoryConfig::new(port, *MemPreset::ALL.choose(rng).unwrap(), size);
    if rng.random_bool(0.5) {
        m.preset = None;
        m.latency = Some(rng.random_range(1..=24));
        m.max_outstanding = Some(rng.random_range(1..=16));
    }
    m
}

fn log_len(rng: &mut impl Rng, max: u64) -> u64 {
    let bits = rng.random_range(0..=max.ilog2());
    rng.random_range(1..=(1u64 << bits)).min(max)
}

/// Random engine, endpoints and up to four disjoint-destination copies.
pub fn random_copy_case(rng: &mut impl Rng) -> CopyCase {
    let dw = *[8u32, 16, 32, 64, 128, 256, 512].choose(rng).unwrap();
    let bb = u64::from(dw / 8);
    let mut engine = EngineConfig::base(1);
    engine.dw = dw;
    engine.nax_read = rng.random_range(1..=16);
    engine.nax_write = rng.random_range(1..=16);
    engine.buffer_depth = rng.random_range(1..=4);
    let layout = rng.random_range(0..10);
    let (src_port, dst_port, src_p, dst_p);
    let mut memories = Vec::new();
    if layout < 3 {
        let p = *WRITABLE.choose(rng).unwrap();
        engine.ports = vec![PortConfig::named("m0", p, Direction::ReadWrite)];
        memories.push(memory("m0", rng, 2 * REGION));
        (src_port, dst_port, src_p, dst_p) = ("m0", "m0", p, p);
    } else {
        let s = if layout == 9 { ProtocolId::Init } else { *WRITABLE.choose(rng).unwrap() };
        let d = *WRITABLE.choose(rng).unwrap();
        engine.ports = vec![
            PortConfig::named("src", s, Direction::Read),
            PortConfig::named("dst", d, Direction::Write),
        ];
        if s != ProtocolId::Init {
            let mut m = memory("src", rng, REGION);
            m.base = REGION;
            memories.push(m);
        }
        let mut m = memory("dst", rng, REGION);
        m.base = 2 * REGION;
        memories.push(m);
        (src_port, dst_port, src_p, dst_p) = ("src", "dst", s, d);
    }
    // intra-port copies read from the lower half and write the upper half
    let (src_base, dst_base) = if layout < 3 { (0, REGION) } else { (REGION, 2 * REGION) };
    let frontend = match rng.random_range(0..4) {
        0 => FrontendConfig::Inst { start: 0 },
        1 => FrontendConfig::Reg { start: 0 },
        _ => FrontendConfig::Direct { start: rng.random_range(0..4) },
    };
    // the register file only carries the decoupling flag and error action
    let full_options = !matches!(frontend, FrontendConfig::Reg { .. });
    let n = rng.random_range(1..=4);
    let mut transfers = Vec::with_capacity(n);
    let mut dst_cursor = dst_base;
    let budget = REGION / n as u64;
    for _ in 0..n {
        let len = log_len(rng, budget.min(1 << 16) - bb);
        let src = src_base + rng.random_range(0..=REGION - len);
        let dst = dst_cursor + rng.random_range(0..bb);
        dst_cursor = dst + len;
        let mut options = BackendOptions { decouple_rw: rng.random_bool(0.7), ..Default::default() };
        if full_options && rng.random_bool(0.2) {
            options.user_burst_cap = Some(bb << rng.random_range(0..6));
        }
        if full_options && src_p == ProtocolId::Init {
            options.init_pattern = match rng.random_range(0..3) {
                0 => InitPattern::Constant { value: rng.random() },
                1 => InitPattern::Increment { start: rng.random() },
                _ => InitPattern::Pseudorandom { seed: rng.random_range(1..u64::MAX) },
            };
        }
        transfers.push(TransferDescriptor1D::new(src, dst, len, src_p).with_protocols(src_p, dst_p).with_options(options));
    }
    let midends = match rng.random_range(0..6) {
        0 => vec![MidendSpec::TensorNd { zero_latency: rng.random_bool(0.5) }],
        1 => vec![MidendSpec::MpSplit { boundary: Boundary::new(bb << rng.random_range(0..8)).unwrap(), side: Side::Write }],
        _ => vec![],
    };
    let cfg = SimConfig {
        name: None,
        engine,
        memory: memories,
        frontend,
        midends,
        workload: Workload::Transfers { transfers: transfers.iter().map(|&t| NdTransferDescriptor::from(t)).collect() },
    };
    CopyCase { cfg, src_port: src_port.into(), dst_port: dst_port.into(), transfers }
}

/// Single-memory piece copy on the base engine with the given bus width.
pub fn piece_copy(dw: u32, nax: u32, preset: MemPreset, total: u64, piece: u64) -> SimConfig {
    let mut c = SimConfig::piece_copy(nax, preset, total, piece);
    c.engine.dw = dw;
    c
}
