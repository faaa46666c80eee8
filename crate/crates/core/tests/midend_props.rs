// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use idma_core::midend::{distribute, expand_nd, split_at_boundary, Boundary, DistPolicy};
use idma_core::{NdDim, NdTransferDescriptor, ProtocolId, Side, TransferDescriptor1D};
use proptest::prelude::*;

/// Byte map `dst -> src` of a list of 1D transfers.
fn byte_map(ts: &[TransferDescriptor1D]) -> BTreeMap<u64, u64> {
    let mut m = BTreeMap::new();
    for t in ts {
        for i in 0..t.length {
            m.insert(t.dst_addr + i, t.src_addr + i);
        }
    }
    m
}

/// Nested loops written out by hand, outer dimension slowest.
fn nd_oracle(base: TransferDescriptor1D, dims: &[NdDim]) -> Vec<TransferDescriptor1D> {
    let mut out = Vec::new();
    let (r1, r2) = (dims.first().map_or(1, |d| d.reps), dims.get(1).map_or(1, |d| d.reps));
    for j in 0..r2 {
        for i in 0..r1 {
            let mut t = base;
            let mut so = 0i64;
            let mut dof = 0i64;
            if let Some(d) = dims.first() {
                so += d.src_stride * i as i64;
                dof += d.dst_stride * i as i64;
            }
            if let Some(d) = dims.get(1) {
                so += d.src_stride * j as i64;
                dof += d.dst_stride * j as i64;
            }
            t.src_addr = (base.src_addr as i64 + so) as u64;
            t.dst_addr = (base.dst_addr as i64 + dof) as u64;
            out.push(t);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn nd_expansion_matches_nested_loops(
        len in 1u64..64,
        dims in prop::collection::vec((-256i64..256, -256i64..256, 1u64..5), 0..=2),
    ) {
        let base = TransferDescriptor1D::new(1 << 20, 1 << 24, len, ProtocolId::Axi);
        let dims: Vec<NdDim> = dims.into_iter().map(|(s, d, r)| NdDim { src_stride: s, dst_stride: d, reps: r }).collect();
        let nd = NdTransferDescriptor { base, dims: dims.clone() };
        let got = expand_nd(&nd, 32).unwrap();
        let want = nd_oracle(base, &dims);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert_eq!((g.src_addr, g.dst_addr, g.length), (w.src_addr, w.dst_addr, w.length));
        }
    }

    #[test]
    fn split_conserves_bytes(
        src in 0u64..(1 << 20),
        dst in 0u64..(1 << 20),
        len in 1u64..10_000,
        k in 0u32..12,
        write_side in any::<bool>(),
    ) {
        let side = if write_side { Side::Write } else { Side::Read };
        let b = Boundary::new(1 << k).unwrap();
        let d = TransferDescriptor1D::new(src, dst, len, ProtocolId::Axi);
        let pieces = split_at_boundary(&d, b, side);
        prop_assert_eq!(byte_map(&pieces), byte_map(&[d]));
        let mut offset = 0;
        for p in &pieces {
            let a = p.addr(side);
            prop_assert_eq!(a >> k, (a + p.length - 1) >> k);
            prop_assert_eq!(p.options.init_offset, offset);
            offset += p.length;
        }
    }

    #[test]
    fn distribution_keeps_order_and_bytes(
        src in 0u64..(1 << 16),
        len in 1u64..8192,
        n in 1usize..8,
        rr in any::<bool>(),
    ) {
        let b = Boundary::new(256).unwrap();
        let d = TransferDescriptor1D::new(src, src + (1 << 20), len, ProtocolId::Axi);
        let pieces = split_at_boundary(&d, b, Side::Write);
        let policy = if rr { DistPolicy::RoundRobin } else { DistPolicy::Address };
        let ports = distribute(&pieces, n, b, Side::Write, policy).unwrap();
        prop_assert_eq!(ports.len(), n);
        let all: Vec<_> = ports.iter().flatten().copied().collect();
        prop_assert_eq!(byte_map(&all), byte_map(&[d]));
        for port in &ports {
            prop_assert!(port.windows(2).all(|w| w[0].dst_addr < w[1].dst_addr));
        }
        if !rr {
            for (i, port) in ports.iter().enumerate() {
                prop_assert!(port.iter().all(|p| (p.dst_addr / 256) as usize % n == i));
            }
        }
    }
}
