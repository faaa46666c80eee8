// SPDX-License-Identifier: Apache-2.0

//! On-chip protocol capability tables and the maximum-legal-burst rule.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Addr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProtocolId {
    #[serde(rename = "axi")]
    Axi,
    #[serde(rename = "axi_lite")]
    AxiLite,
    #[serde(rename = "axi_stream")]
    AxiStream,
    #[serde(rename = "obi")]
    Obi,
    #[serde(rename = "tilelink_ul")]
    TileLinkUL,
    #[serde(rename = "tilelink_uh")]
    TileLinkUH,
    /// Memory-initialization pseudo protocol (read only).
    #[serde(rename = "init")]
    Init,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 7] = [
        ProtocolId::Axi,
        ProtocolId::AxiLite,
        ProtocolId::AxiStream,
        ProtocolId::Obi,
        ProtocolId::TileLinkUL,
        ProtocolId::TileLinkUH,
        ProtocolId::Init,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolId::Axi => "axi",
            ProtocolId::AxiLite => "axi_lite",
            ProtocolId::AxiStream => "axi_stream",
            ProtocolId::Obi => "obi",
            ProtocolId::TileLinkUL => "tilelink_ul",
            ProtocolId::TileLinkUH => "tilelink_uh",
            ProtocolId::Init => "init",
        }
    }

    pub fn capabilities(self) -> Capabilities {
        capabilities(self)
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown protocol `{0}`")]
pub struct UnknownProtocol(pub String);

impl FromStr for ProtocolId {
    type Err = UnknownProtocol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        ProtocolId::ALL
            .into_iter()
            .find(|p| p.as_str() == lower)
            .or(match lower.as_str() {
                "axi4" => Some(ProtocolId::Axi),
                "axilite" | "axi4_lite" => Some(ProtocolId::AxiLite),
                "axis" | "axistream" => Some(ProtocolId::AxiStream),
                "tl_ul" | "tlul" => Some(ProtocolId::TileLinkUL),
                "tl_uh" | "tluh" => Some(ProtocolId::TileLinkUH),
                _ => None,
            })
            .ok_or(UnknownProtocol(s.to_string()))
    }
}

/// Static burst properties of a protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub supports_bursts: bool,
    pub max_burst_beats: Option<u64>,
    pub max_burst_bytes: Option<u64>,
    pub page_bytes: Option<u64>,
    /// Bursts must be naturally aligned powers of two.
    pub pow2_only: bool,
    /// False for stream-like endpoints whose managers ignore addresses.
    pub addressed: bool,
    pub read_capable: bool,
    pub write_capable: bool,
}

const SINGLE_BEAT: Capabilities = Capabilities {
    supports_bursts: false,
    max_burst_beats: Some(1),
    max_burst_bytes: None,
    page_bytes: None,
    pow2_only: false,
    addressed: true,
    read_capable: true,
    write_capable: true,
};

pub fn capabilities(p: ProtocolId) -> Capabilities {
    match p {
        ProtocolId::Axi => Capabilities {
            supports_bursts: true,
            max_burst_beats: Some(256),
            max_burst_bytes: Some(4096),
            page_bytes: Some(4096),
            ..SINGLE_BEAT
        },
        ProtocolId::AxiLite | ProtocolId::Obi | ProtocolId::TileLinkUL => SINGLE_BEAT,
        ProtocolId::AxiStream => Capabilities {
            supports_bursts: true,
            max_burst_beats: None,
            addressed: false,
            ..SINGLE_BEAT
        },
        ProtocolId::TileLinkUH => Capabilities {
            supports_bursts: true,
            max_burst_beats: None,
            pow2_only: true,
            ..SINGLE_BEAT
        },
        ProtocolId::Init => Capabilities {
            supports_bursts: true,
            max_burst_beats: None,
            addressed: false,
            write_capable: false,
            ..SINGLE_BEAT
        },
    }
}

/// Number of bus beats a burst occupies.
pub fn beats(p: ProtocolId, addr: Addr, len: u64, dw: u32) -> u64 {
    let bb = bus_bytes(dw);
    let offset = if p.capabilities().addressed { addr % bb } else { 0 };
    (offset + len).div_ceil(bb)
}

fn bus_bytes(dw: u32) -> u64 {
    u64::from(dw / 8).max(1)
}

/// Largest burst length starting at `addr` that violates no constraint of
/// `p`. Always at least one byte; never more than `remaining`.
pub fn max_legal_burst(
    p: ProtocolId,
    addr: Addr,
    remaining: u64,
    dw: u32,
    user_cap: Option<u64>,
) -> u64 {
    let bb = bus_bytes(dw);
    let caps = p.capabilities();
    let mut len = remaining.min(user_cap.unwrap_or(u64::MAX));
    if !caps.supports_bursts {
        len = len.min(bb - addr % bb);
    } else if caps.addressed {
        if let Some(page) = caps.page_bytes {
            len = len.min(page - addr % page);
        }
        if let Some(max) = caps.max_burst_bytes {
            len = len.min(max);
        }
        if let Some(max_beats) = caps.max_burst_beats {
            len = len.min(max_beats * bb - addr % bb);
        }
    }
    if caps.pow2_only && len > 0 {
        len = 1u64 << (63 - len.leading_zeros());
        if addr != 0 {
            len = len.min(1u64 << addr.trailing_zeros());
        }
    }
    len.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum BurstViolation {
    #[error("zero-length burst")]
    Empty,
    #[error("burst exceeds the user cap")]
    ExceedsCap,
    #[error("single-beat protocol burst crosses a bus word")]
    CrossesBusWord,
    #[error("burst crosses a page boundary")]
    CrossesPage,
    #[error("burst exceeds the beat limit")]
    TooManyBeats,
    #[error("burst exceeds the byte limit")]
    TooManyBytes,
    #[error("burst length is not a power of two")]
    NotPowerOfTwo,
    #[error("burst is not naturally aligned")]
    Misaligned,
}

/// Checks one burst against the protocol constraints.
pub fn check_burst(
    p: ProtocolId,
    addr: Addr,
    len: u64,
    dw: u32,
    user_cap: Option<u64>,
) -> Result<(), BurstViolation> {
    let bb = bus_bytes(dw);
    let caps = p.capabilities();
    if len == 0 {
        return Err(BurstViolation::Empty);
    }
    if user_cap.is_some_and(|c| len > c) {
        return Err(BurstViolation::ExceedsCap);
    }
    if !caps.supports_bursts {
        if addr % bb + len > bb {
            return Err(BurstViolation::CrossesBusWord);
        }
        return Ok(());
    }
    if caps.addressed {
        if let Some(page) = caps.page_bytes {
            if addr % page + len > page {
                return Err(BurstViolation::CrossesPage);
            }
        }
        if caps.max_burst_bytes.is_some_and(|m| len > m) {
            return Err(BurstViolation::TooManyBytes);
        }
        if caps.max_burst_beats.is_some_and(|m| beats(p, addr, len, dw) > m) {
            return Err(BurstViolation::TooManyBeats);
        }
    }
    if caps.pow2_only {
        if !len.is_power_of_two() {
            return Err(BurstViolation::NotPowerOfTwo);
        }
        if !addr.is_multiple_of(len) {
            return Err(BurstViolation::Misaligned);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force reference: constraints written out from the protocol
    /// table, scanning every candidate length.
    fn oracle(p: ProtocolId, addr: u64, remaining: u64, dw: u32, cap: Option<u64>) -> u64 {
        let bb = (dw / 8) as u64;
        let legal = |l: u64| -> bool {
            if cap.is_some_and(|c| l > c) {
                return false;
            }
            let first_beat = addr / bb;
            let last_beat = (addr + l - 1) / bb;
            match p {
                ProtocolId::Axi => {
                    (addr / 4096 == (addr + l - 1) / 4096)
                        && l <= 4096
                        && last_beat - first_beat < 256
                }
                ProtocolId::AxiLite | ProtocolId::Obi | ProtocolId::TileLinkUL => {
                    first_beat == last_beat
                }
                ProtocolId::AxiStream | ProtocolId::Init => true,
                ProtocolId::TileLinkUH => l.is_power_of_two() && addr.is_multiple_of(l),
            }
        };
        (1..=remaining).rev().find(|&l| legal(l)).unwrap_or(1)
    }

    #[test]
    fn capability_rows() {
        let axi = capabilities(ProtocolId::Axi);
        assert!(axi.supports_bursts);
        assert_eq!(axi.max_burst_beats, Some(256));
        assert_eq!(axi.max_burst_bytes, Some(4096));
        assert_eq!(axi.page_bytes, Some(4096));
        assert!(!capabilities(ProtocolId::Obi).supports_bursts);
        assert!(!capabilities(ProtocolId::AxiLite).supports_bursts);
        assert!(!capabilities(ProtocolId::TileLinkUL).supports_bursts);
        assert!(capabilities(ProtocolId::TileLinkUH).pow2_only);
        let init = capabilities(ProtocolId::Init);
        assert!(init.read_capable && !init.write_capable);
    }

    #[test]
    fn documented_examples() {
        let cases = [
            (ProtocolId::Axi, 0x0F00, 8192, 64, 0x100),
            (ProtocolId::Obi, 0x1001, 100, 32, 3),
            (ProtocolId::TileLinkUH, 0x40, 48, 32, 32),
            (ProtocolId::Axi, 0x1000, 8192, 64, 2048),
        ];
        for (p, addr, rem, dw, expected) in cases {
            assert_eq!(oracle(p, addr, rem, dw, None), expected, "oracle {p} {addr:#x}");
            assert_eq!(max_legal_burst(p, addr, rem, dw, None), expected, "{p} {addr:#x}");
        }
    }

    #[test]
    fn stream_is_only_bounded_by_cap() {
        assert_eq!(max_legal_burst(ProtocolId::AxiStream, 0x123, 1 << 20, 32, None), 1 << 20);
        assert_eq!(max_legal_burst(ProtocolId::AxiStream, 0x123, 1 << 20, 32, Some(64)), 64);
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..4000 {
            let p = ProtocolId::ALL[rng.random_range(0..ProtocolId::ALL.len())];
            let dw = 8u32 << rng.random_range(0..7);
            let addr = rng.random_range(0..0x4000u64);
            let remaining = rng.random_range(1..=600u64);
            let cap = if rng.random_bool(0.3) {
                Some(rng.random_range((dw / 8) as u64..=512))
            } else {
                None
            };
            assert_eq!(
                max_legal_burst(p, addr, remaining, dw, cap),
                oracle(p, addr, remaining, dw, cap),
                "{p} addr={addr:#x} rem={remaining} dw={dw} cap={cap:?}"
            );
        }
    }

    #[test]
    fn result_is_self_consistent_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100_000 {
            let p = ProtocolId::ALL[rng.random_range(0..ProtocolId::ALL.len())];
            let dw = 8u32 << rng.random_range(0..8);
            let addr = rng.random_range(0..(1u64 << 40));
            let remaining = rng.random_range(1..=(1u64 << 17));
            let cap = rng
                .random_bool(0.3)
                .then(|| rng.random_range((dw / 8) as u64..=(1 << 14)));
            let l = max_legal_burst(p, addr, remaining, dw, cap);
            assert!((1..=remaining).contains(&l));
            assert_eq!(check_burst(p, addr, l, dw, cap), Ok(()), "{p} {addr:#x} {l}");
        }
    }

    #[test]
    fn monotone_in_remaining() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20_000 {
            let p = ProtocolId::ALL[rng.random_range(0..ProtocolId::ALL.len())];
            let dw = 8u32 << rng.random_range(0..8);
            let addr = rng.random_range(0..(1u64 << 20));
            let a = rng.random_range(1..=(1u64 << 14));
            let b = a + rng.random_range(0..=(1u64 << 14));
            assert!(max_legal_burst(p, addr, a, dw, None) <= max_legal_burst(p, addr, b, dw, None));
        }
    }

    #[test]
    fn check_burst_reports_violations() {
        assert_eq!(check_burst(ProtocolId::Axi, 0xF00, 0x200, 64, None), Err(BurstViolation::CrossesPage));
        assert_eq!(check_burst(ProtocolId::Obi, 0x2, 4, 32, None), Err(BurstViolation::CrossesBusWord));
        assert_eq!(check_burst(ProtocolId::TileLinkUH, 0x0, 48, 32, None), Err(BurstViolation::NotPowerOfTwo));
        assert_eq!(check_burst(ProtocolId::TileLinkUH, 0x20, 64, 32, None), Err(BurstViolation::Misaligned));
        assert_eq!(check_burst(ProtocolId::Axi, 0x0, 4096, 64, None), Err(BurstViolation::TooManyBeats));
        assert_eq!(check_burst(ProtocolId::Axi, 0x0, 0, 64, None), Err(BurstViolation::Empty));
    }

    #[test]
    fn parses_names() {
        for p in ProtocolId::ALL {
            assert_eq!(p.as_str().parse::<ProtocolId>().unwrap(), p);
        }
        assert_eq!("AXI4".parse::<ProtocolId>().unwrap(), ProtocolId::Axi);
        assert!("wishbone".parse::<ProtocolId>().is_err());
    }
}
