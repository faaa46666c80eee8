// SPDX-License-Identifier: Apache-2.0

mod common;

use common::{burst_is_legal, tiles_exactly};
use idma_core::{legalize, legalize_side, BackendOptions, EngineConfig, ProtocolId, Side, TransferDescriptor1D};
use proptest::prelude::*;

fn protocol() -> impl Strategy<Value = ProtocolId> {
    prop::sample::select(ProtocolId::ALL.to_vec())
}

fn dw() -> impl Strategy<Value = u32> {
    (0u32..7).prop_map(|k| 8 << k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn every_side_is_legal_and_exact(
        p in protocol(),
        dw in dw(),
        addr in 0u64..(1 << 40),
        len in 1u64..20_000,
        cap_beats in prop::option::of(1u64..32),
    ) {
        let cap = cap_beats.map(|b| b * u64::from(dw / 8));
        let bursts = legalize_side(addr, len, p, Side::Read, dw, cap);
        prop_assert!(tiles_exactly(&bursts, addr, len).is_ok());
        for b in &bursts {
            prop_assert!(burst_is_legal(p, b.addr, b.length, dw, cap), "{:?}", b);
        }
    }

    #[test]
    fn coupled_sides_cut_at_same_offsets(
        src in 0u64..(1 << 20),
        dst in 0u64..(1 << 20),
        len in 1u64..20_000,
        sp in protocol(),
        dp in prop::sample::select(vec![ProtocolId::Axi, ProtocolId::Obi, ProtocolId::TileLinkUH, ProtocolId::AxiLite]),
        dw in dw(),
    ) {
        let mut cfg = EngineConfig::base(4);
        cfg.dw = dw;
        let opts = BackendOptions { decouple_rw: false, ..BackendOptions::default() };
        let d = TransferDescriptor1D::new(src, dst, len, sp).with_protocols(sp, dp).with_options(opts);
        let l = legalize(&d, &cfg).unwrap();
        prop_assert_eq!(l.read_bursts.len(), l.write_bursts.len());
        for (r, w) in l.read_bursts.iter().zip(&l.write_bursts) {
            prop_assert_eq!(r.length, w.length);
            prop_assert_eq!(r.addr - src, w.addr - dst);
            prop_assert!(burst_is_legal(sp, r.addr, r.length, dw, None));
            prop_assert!(burst_is_legal(dp, w.addr, w.length, dw, None));
        }
        prop_assert!(tiles_exactly(&l.write_bursts, dst, len).is_ok());
    }

    #[test]
    fn without_legalizer_one_burst_per_side(src in 0u64..(1 << 20), len in 1u64..100_000) {
        let mut cfg = EngineConfig::base(4);
        cfg.has_legalizer = false;
        let d = TransferDescriptor1D::new(src, src + (1 << 21), len, ProtocolId::Axi);
        let l = legalize(&d, &cfg).unwrap();
        prop_assert_eq!(l.read_bursts.len(), 1);
        prop_assert_eq!(l.write_bursts.len(), 1);
        prop_assert_eq!(l.read_bursts[0].length, len);
    }
}

#[test]
fn axi_page_crossing_splits() {
    let b = legalize_side(0xFF8, 16, ProtocolId::Axi, Side::Read, 64, None);
    let cuts: Vec<_> = b.iter().map(|b| (b.addr, b.length)).collect();
    assert_eq!(cuts, vec![(0xFF8, 8), (0x1000, 8)]);
}

#[test]
fn tilelink_uh_uses_aligned_powers_of_two() {
    let b = legalize_side(0x3, 13, ProtocolId::TileLinkUH, Side::Write, 32, None);
    let cuts: Vec<_> = b.iter().map(|b| (b.addr, b.length)).collect();
    assert_eq!(cuts, vec![(0x3, 1), (0x4, 4), (0x8, 8)]);
}

#[test]
fn zero_length_policy() {
    let d = TransferDescriptor1D::new(0, 64, 0, ProtocolId::Axi);
    let mut cfg = EngineConfig::base(2);
    assert!(legalize(&d, &cfg).unwrap().read_bursts.is_empty());
    cfg.reject_zero_length = true;
    assert!(legalize(&d, &cfg).is_err());
}
