// SPDX-License-Identifier: Apache-2.0

//! Transfer legalizer: cuts a 1D transfer into protocol-legal bursts,
//! independently for the read and the write side.

use serde::Serialize;
use thiserror::Error;

use crate::protocol::{max_legal_burst, ProtocolId};
use crate::types::{Addr, EngineConfig, LegalBurst, Side, TransferDescriptor1D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LegalizeError {
    #[error("zero-length transfer rejected")]
    ZeroLengthRejected,
}

/// Pull-based generator of the bursts of one side. Each call to `next`
/// takes the largest legal burst at the current address.
#[derive(Debug, Clone)]
pub struct SideBursts {
    addr: Addr,
    remaining: u64,
    protocol: ProtocolId,
    side: Side,
    dw: u32,
    cap: Option<u64>,
    seq: u32,
}

impl SideBursts {
    pub fn new(
        addr: Addr,
        length: u64,
        protocol: ProtocolId,
        side: Side,
        dw: u32,
        cap: Option<u64>,
    ) -> Self {
        SideBursts { addr, remaining: length, protocol, side, dw, cap, seq: 0 }
    }

    /// Length of the next burst without consuming it.
    pub fn peek_len(&self) -> Option<u64> {
        self.peek_len_within(u64::MAX)
    }

    /// Largest legal next burst of at most `max` bytes.
    pub fn peek_len_within(&self, max: u64) -> Option<u64> {
        let avail = self.remaining.min(max);
        (avail > 0).then(|| max_legal_burst(self.protocol, self.addr, avail, self.dw, self.cap))
    }

    fn take_burst(&mut self, len: u64) -> LegalBurst {
        let burst = LegalBurst {
            addr: self.addr,
            length: len,
            side: self.side,
            protocol: self.protocol,
            seq: self.seq,
        };
        self.addr += len;
        self.remaining -= len;
        self.seq += 1;
        burst
    }
}

impl Iterator for SideBursts {
    type Item = LegalBurst;

    fn next(&mut self) -> Option<LegalBurst> {
        let len = self.peek_len()?;
        Some(self.take_burst(len))
    }
}

/// Greedy maximal tiling of `[addr, addr + length)` into legal bursts.
pub fn legalize_side(
    addr: Addr,
    length: u64,
    protocol: ProtocolId,
    side: Side,
    dw: u32,
    user_cap: Option<u64>,
) -> Vec<LegalBurst> {
    SideBursts::new(addr, length, protocol, side, dw, user_cap).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LegalizedTransfer {
    pub read_bursts: Vec<LegalBurst>,
    pub write_bursts: Vec<LegalBurst>,
    pub parent: TransferDescriptor1D,
}

/// Legalizes both sides of a transfer for the given back-end.
///
/// Without a hardware legalizer the descriptor is forwarded as one burst
/// per side; legality is then the caller's responsibility.
pub fn legalize(
    d: &TransferDescriptor1D,
    cfg: &EngineConfig,
) -> Result<LegalizedTransfer, LegalizeError> {
    if d.length == 0 {
        if cfg.reject_zero_length {
            return Err(LegalizeError::ZeroLengthRejected);
        }
        return Ok(LegalizedTransfer { read_bursts: vec![], write_bursts: vec![], parent: *d });
    }
    let side = |side: Side| {
        SideBursts::new(
            d.addr(side),
            d.length,
            d.protocol(side),
            side,
            cfg.dw,
            d.options.side_cap(side, cfg.dw),
        )
    };
    let (read_bursts, write_bursts) = if !cfg.has_legalizer {
        let mut r = side(Side::Read);
        let mut w = side(Side::Write);
        (vec![r.take_burst(d.length)], vec![w.take_burst(d.length)])
    } else if d.options.decouple_rw {
        (side(Side::Read).collect(), side(Side::Write).collect())
    } else {
        lockstep(side(Side::Read), side(Side::Write))
    };
    Ok(LegalizedTransfer { read_bursts, write_bursts, parent: *d })
}

/// Both sides cut at the same stream offsets: each step shrinks the cut
/// until it is legal on both sides. A shortened burst is not always legal
/// (TileLink-UH wants aligned powers of two), hence the loop.
fn lockstep(mut read: SideBursts, mut write: SideBursts) -> (Vec<LegalBurst>, Vec<LegalBurst>) {
    let mut r = Vec::new();
    let mut w = Vec::new();
    while let Some(mut len) = read.peek_len() {
        loop {
            let fit = write.peek_len_within(len).expect("sides have equal length");
            let fit = read.peek_len_within(fit).expect("sides have equal length");
            if fit == len {
                break;
            }
            len = fit;
        }
        r.push(read.take_burst(len));
        w.push(write.take_burst(len));
    }
    (r, w)
}
