// SPDX-License-Identifier: Apache-2.0

//! Memory endpoint models: a byte store plus an in-order, fixed-latency
//! pipeline with bounded outstanding capacity and a fault-injection plan.
//!
//! Timing and storage are separate. [`Memory`] holds bytes and may be shared
//! by several [`Endpoint`]s (one per back-end talking to the same port).

use std::collections::VecDeque;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Addr, Side};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemsysError {
    #[error("unknown memory preset `{0}`")]
    UnknownPreset(String),
    #[error("endpoint already holds {0} outstanding requests")]
    CapacityExceeded(u32),
    #[error("access {addr:#x}+{len:#x} outside memory [{base:#x}, {end:#x})")]
    OutOfRange { addr: Addr, len: u64, base: Addr, end: u64 },
    #[error("endpoint latency and capacity must be at least 1")]
    ZeroParameter,
}

/// Latency and capacity of an endpoint pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointTiming {
    pub latency: u64,
    pub max_outstanding: u32,
}

impl EndpointTiming {
    pub fn new(latency: u64, max_outstanding: u32) -> Result<Self, MemsysError> {
        if latency == 0 || max_outstanding == 0 {
            return Err(MemsysError::ZeroParameter);
        }
        Ok(EndpointTiming { latency, max_outstanding })
    }
}

/// Named memory technologies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemPreset {
    Sram,
    RpcDram,
    Hbm,
}

impl MemPreset {
    pub const ALL: [MemPreset; 3] = [MemPreset::Sram, MemPreset::RpcDram, MemPreset::Hbm];

    pub fn timing(self) -> EndpointTiming {
        match self {
            MemPreset::Sram => EndpointTiming { latency: 3, max_outstanding: 8 },
            MemPreset::RpcDram => EndpointTiming { latency: 13, max_outstanding: 16 },
            MemPreset::Hbm => EndpointTiming { latency: 100, max_outstanding: 64 },
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MemPreset::Sram => "sram",
            MemPreset::RpcDram => "rpc_dram",
            MemPreset::Hbm => "hbm",
        }
    }
}

impl FromStr for MemPreset {
    type Err = MemsysError;

    fn from_str(s: &str) -> Result<Self, MemsysError> {
        MemPreset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| MemsysError::UnknownPreset(s.to_string()))
    }
}

/// Timing of a named preset.
pub fn preset(name: &str) -> Result<EndpointTiming, MemsysError> {
    Ok(name.parse::<MemPreset>()?.timing())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusErrorKind {
    #[default]
    Slverr,
    Decerr,
}

/// One fault-injection entry. Matches the `burst`-th request (1-based) on
/// the given channel, or any request overlapping `addr = [lo, hi)`, and
/// fires once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorRule {
    #[serde(default)]
    pub burst: Option<u64>,
    #[serde(default)]
    pub addr: Option<(Addr, Addr)>,
    #[serde(default = "read_side")]
    pub side: Side,
    #[serde(default)]
    pub kind: BusErrorKind,
}

fn read_side() -> Side {
    Side::Read
}

impl ErrorRule {
    fn matches(&self, side: Side, ordinal: u64, addr: Addr, len: u64) -> bool {
        if self.side != side {
            return false;
        }
        let by_burst = self.burst.is_none_or(|k| k == ordinal);
        let by_addr = self.addr.is_none_or(|(lo, hi)| addr < hi && lo < addr + len.max(1));
        by_burst && by_addr && (self.burst.is_some() || self.addr.is_some())
    }
}

/// Flat byte store mapped at `[base, base + size)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Memory {
    base: Addr,
    data: Vec<u8>,
}

impl Memory {
    pub fn new(base: Addr, size: usize) -> Self {
        Memory { base, data: vec![0; size] }
    }

    pub fn from_bytes(base: Addr, data: Vec<u8>) -> Self {
        Memory { base, data }
    }

    pub fn base(&self) -> Addr {
        self.base
    }

    pub fn size(&self) -> u64 {
        self.data.len() as u64
    }

    pub fn contains(&self, addr: Addr, len: u64) -> bool {
        addr >= self.base
            && (addr - self.base).checked_add(len).is_some_and(|end| end <= self.size())
    }

    fn check(&self, addr: Addr, len: u64) -> Result<usize, MemsysError> {
        if self.contains(addr, len) {
            Ok((addr - self.base) as usize)
        } else {
            Err(MemsysError::OutOfRange {
                addr,
                len,
                base: self.base,
                end: self.base + self.size(),
            })
        }
    }

    pub fn read(&self, addr: Addr, len: u64) -> Result<&[u8], MemsysError> {
        let off = self.check(addr, len)?;
        Ok(&self.data[off..off + len as usize])
    }

    pub fn write(&mut self, addr: Addr, bytes: &[u8]) -> Result<(), MemsysError> {
        let off = self.check(addr, bytes.len() as u64)?;
        self.data[off..off + bytes.len()].copy_from_slice(bytes);
        Ok(())
    }

    pub fn write_byte(&mut self, addr: Addr, byte: u8) -> Result<(), MemsysError> {
        let off = self.check(addr, 1)?;
        self.data[off] = byte;
        Ok(())
    }

    pub fn bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn bytes_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }
}

/// A data beat returned on the read channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadBeat {
    pub tag: u64,
    /// Index of the beat within its burst.
    pub index: u32,
    pub last: bool,
    pub error: Option<BusErrorKind>,
}

/// A write acknowledgment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteAck {
    pub tag: u64,
    pub error: Option<BusErrorKind>,
}

#[derive(Debug, Clone)]
struct ReadReq {
    tag: u64,
    accepted: u64,
    beats: u32,
    delivered: u32,
    error: Option<BusErrorKind>,
}

#[derive(Debug, Clone)]
struct WriteReq {
    tag: u64,
    error: Option<BusErrorKind>,
    /// Cycle the acknowledgment becomes visible, once the last beat arrived.
    ack_at: Option<u64>,
}

/// Timing side of a pipelined memory endpoint.
///
/// Reads: the first beat of a request is available `latency` cycles after
/// acceptance, later beats one per cycle, strictly in order. A beat that
/// is not taken stays at the head (back-pressure). Writes: the
/// acknowledgment is available `latency` cycles after the last data beat.
/// Read and write channels each hold up to `max_outstanding` requests.
#[derive(Debug, Clone)]
pub struct Endpoint {
    timing: EndpointTiming,
    rules: Vec<(ErrorRule, bool)>,
    reads: VecDeque<ReadReq>,
    writes: VecDeque<WriteReq>,
    last_read_beat: Option<u64>,
    read_ordinal: u64,
    write_ordinal: u64,
}

impl Endpoint {
    pub fn new(timing: EndpointTiming, rules: Vec<ErrorRule>) -> Self {
        Endpoint {
            timing,
            rules: rules.into_iter().map(|r| (r, false)).collect(),
            reads: VecDeque::new(),
            writes: VecDeque::new(),
            last_read_beat: None,
            read_ordinal: 0,
            write_ordinal: 0,
        }
    }

    pub fn timing(&self) -> EndpointTiming {
        self.timing
    }

    pub fn reads_outstanding(&self) -> u32 {
        self.reads.len() as u32
    }

    pub fn writes_outstanding(&self) -> u32 {
        self.writes.len() as u32
    }

    pub fn can_accept_read(&self) -> bool {
        self.reads_outstanding() < self.timing.max_outstanding
    }

    pub fn can_accept_write(&self) -> bool {
        self.writes_outstanding() < self.timing.max_outstanding
    }

    fn fire(&mut self, side: Side, ordinal: u64, addr: Addr, len: u64) -> Option<BusErrorKind> {
        let hit = self
            .rules
            .iter_mut()
            .find(|(r, fired)| !*fired && r.matches(side, ordinal, addr, len))?;
        hit.1 = true;
        Some(hit.0.kind)
    }

    /// Accepts a read burst of `beats` beats at cycle `now`.
    pub fn submit_read(
        &mut self,
        tag: u64,
        addr: Addr,
        len: u64,
        beats: u32,
        now: u64,
    ) -> Result<(), MemsysError> {
        if !self.can_accept_read() {
            return Err(MemsysError::CapacityExceeded(self.timing.max_outstanding));
        }
        self.read_ordinal += 1;
        let error = self.fire(Side::Read, self.read_ordinal, addr, len);
        self.reads.push_back(ReadReq { tag, accepted: now, beats: beats.max(1), delivered: 0, error });
        Ok(())
    }

    /// Earliest cycle the head read beat can be delivered.
    pub fn next_read_beat_at(&self) -> Option<u64> {
        let head = self.reads.front()?;
        let first = head.accepted + self.timing.latency;
        Some(self.last_read_beat.map_or(first, |t| first.max(t + 1)))
    }

    /// The head read beat, if it is available at `now`.
    pub fn peek_read_beat(&self, now: u64) -> Option<ReadBeat> {
        let at = self.next_read_beat_at()?;
        let head = self.reads.front()?;
        (at <= now).then_some(ReadBeat {
            tag: head.tag,
            index: head.delivered,
            last: head.delivered + 1 == head.beats,
            error: head.error,
        })
    }

    /// Takes the head read beat at `now`. The request retires with its last
    /// beat.
    pub fn pop_read_beat(&mut self, now: u64) -> Option<ReadBeat> {
        let beat = self.peek_read_beat(now)?;
        self.last_read_beat = Some(now);
        let head = self.reads.front_mut().expect("peeked");
        head.delivered += 1;
        if beat.last {
            self.reads.pop_front();
        }
        Some(beat)
    }

    /// Accepts a write burst header at `now`.
    pub fn submit_write(&mut self, tag: u64, addr: Addr, len: u64) -> Result<(), MemsysError> {
        if !self.can_accept_write() {
            return Err(MemsysError::CapacityExceeded(self.timing.max_outstanding));
        }
        self.write_ordinal += 1;
        let error = self.fire(Side::Write, self.write_ordinal, addr, len);
        self.writes.push_back(WriteReq { tag, error, ack_at: None });
        Ok(())
    }

    /// Records the last data beat of write `tag` at `now`.
    pub fn finish_write(&mut self, tag: u64, now: u64) {
        if let Some(w) = self.writes.iter_mut().find(|w| w.tag == tag) {
            w.ack_at = Some(now + self.timing.latency);
        }
    }

    pub fn next_ack_at(&self) -> Option<u64> {
        self.writes.front()?.ack_at
    }

    /// Takes the head acknowledgment if it is due at `now`.
    pub fn pop_ack(&mut self, now: u64) -> Option<WriteAck> {
        let due = self.next_ack_at()? <= now;
        if !due {
            return None;
        }
        let w = self.writes.pop_front()?;
        Some(WriteAck { tag: w.tag, error: w.error })
    }

    pub fn idle(&self) -> bool {
        self.reads.is_empty() && self.writes.is_empty()
    }
}
