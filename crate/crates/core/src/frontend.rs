// SPDX-License-Identifier: Apache-2.0

//! Front-ends: a 32-bit register file with up to three dimensions, a 64-bit
//! in-memory descriptor chain, and direct injection.
//!
//! Register map (byte offsets, 32-bit registers):
//!
//! | offset | register                 |
//! |--------|--------------------------|
//! | 0x00   | src_address              |
//! | 0x04   | dst_address              |
//! | 0x08   | transfer_length          |
//! | 0x0C   | status (read-only)       |
//! | 0x10   | configuration            |
//! | 0x14   | transfer_id (read launches) |
//! | 0x18..0x20 | dim 2: src_stride, dst_stride, reps |
//! | 0x24..0x2C | dim 3: src_stride, dst_stride, reps |
//!
//! Configuration bits, shared with the descriptor `backend_config` word:
//! `[2:0]` source protocol, `[5:3]` destination protocol (index into
//! [`ProtocolId::ALL`]), `[7:6]` error action (0 continue, 1 abort,
//! 2 replay), bit 8 couples read and write legalization. Other bits are
//! reserved and must be zero.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memsys::{Endpoint, EndpointTiming, Memory};
use crate::metrics::{PortCounters, TraceEvent, TraceKind};
use crate::midend::Launch;
use crate::protocol::ProtocolId;
use crate::types::{Addr, BackendOptions, ErrorAction, NdDim, NdTransferDescriptor, TransferDescriptor1D};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("no register at offset {0:#x}")]
    UnmappedOffset(u32),
    #[error("register at offset {0:#x} is read-only")]
    ReadOnly(u32),
    #[error("descriptor pointer {0:#x} is not 8-byte aligned")]
    Misaligned(Addr),
    #[error("descriptor at {0:#x} is not mapped")]
    Unmapped(Addr),
    #[error("descriptor chain longer than {0} entries")]
    ChainTooLong(usize),
    #[error("invalid configuration word {0:#x}")]
    BadConfig(u64),
    #[error("register front-end supports at most 3 dimensions")]
    TooManyDims,
    #[error("descriptor front-end only carries 1D transfers")]
    NotOneDimensional,
    #[error("options {0:?} cannot be expressed in a configuration word")]
    UnencodableOptions(Box<BackendOptions>),
}

pub mod regs {
    pub const SRC: u32 = 0x00;
    pub const DST: u32 = 0x04;
    pub const LEN: u32 = 0x08;
    pub const STATUS: u32 = 0x0C;
    pub const CONFIG: u32 = 0x10;
    pub const TRANSFER_ID: u32 = 0x14;
    pub const DIM2: u32 = 0x18;
    pub const DIM3: u32 = 0x24;
}

/// Packs protocols and options into the configuration word.
pub fn encode_config(d: &TransferDescriptor1D) -> u64 {
    let idx = |p: ProtocolId| ProtocolId::ALL.iter().position(|&q| q == p).unwrap_or(0) as u64;
    let action = match d.options.error_action_default {
        ErrorAction::Continue => 0,
        ErrorAction::Abort => 1,
        ErrorAction::Replay => 2,
    };
    idx(d.src_protocol) | idx(d.dst_protocol) << 3 | action << 6 | u64::from(!d.options.decouple_rw) << 8
}

/// Fails unless `d.options` survive an [`encode_config`] round trip.
pub fn check_encodable(d: &TransferDescriptor1D) -> Result<(), FrontendError> {
    match decode_config(encode_config(d)) {
        Ok((_, _, o)) if o == d.options => Ok(()),
        _ => Err(FrontendError::UnencodableOptions(Box::new(d.options))),
    }
}

/// Inverse of [`encode_config`]; returns `(src, dst, options)`.
pub fn decode_config(word: u64) -> Result<(ProtocolId, ProtocolId, BackendOptions), FrontendError> {
    let proto = |i: u64| ProtocolId::ALL.get(i as usize).copied().ok_or(FrontendError::BadConfig(word));
    if word >> 9 != 0 {
        return Err(FrontendError::BadConfig(word));
    }
    let src = proto(word & 7)?;
    let dst = proto((word >> 3) & 7)?;
    let action = match (word >> 6) & 3 {
        0 => ErrorAction::Continue,
        1 => ErrorAction::Abort,
        2 => ErrorAction::Replay,
        _ => return Err(FrontendError::BadConfig(word)),
    };
    let options = BackendOptions {
        decouple_rw: word & (1 << 8) == 0,
        error_action_default: action,
        ..BackendOptions::default()
    };
    Ok((src, dst, options))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DimRegs {
    pub src_stride: u32,
    pub dst_stride: u32,
    pub reps: u32,
}

/// Register file of the 32-bit, 3D front-end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegFileState {
    pub src_address: u32,
    pub dst_address: u32,
    pub transfer_length: u32,
    pub configuration: u32,
    pub dims: [DimRegs; 2],
    pub next_id: u64,
    pub last_completed_id: u64,
}

impl Default for RegFileState {
    fn default() -> Self {
        RegFileState {
            src_address: 0,
            dst_address: 0,
            transfer_length: 0,
            configuration: 0,
            dims: [DimRegs { reps: 1, ..DimRegs::default() }; 2],
            next_id: 1,
            last_completed_id: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegResponse {
    pub value: u32,
    pub launch: Option<(u64, NdTransferDescriptor)>,
}

impl RegFileState {
    /// One register access. Reading `transfer_id` launches the programmed
    /// transfer and returns its id.
    pub fn access(&mut self, offset: u32, is_read: bool, value: u32) -> Result<RegResponse, FrontendError> {
        let plain = |v| Ok(RegResponse { value: v, launch: None });
        if (regs::DIM2..regs::DIM3 + 12).contains(&offset) && offset.is_multiple_of(4) {
            let d = &mut self.dims[((offset - regs::DIM2) / 12) as usize];
            let field = match (offset - regs::DIM2) % 12 {
                0 => &mut d.src_stride,
                4 => &mut d.dst_stride,
                _ => &mut d.reps,
            };
            if !is_read {
                *field = value;
            }
            return plain(*field);
        }
        let field = match offset {
            regs::SRC => &mut self.src_address,
            regs::DST => &mut self.dst_address,
            regs::LEN => &mut self.transfer_length,
            regs::CONFIG => &mut self.configuration,
            regs::STATUS if is_read => return plain(self.last_completed_id as u32),
            regs::TRANSFER_ID if is_read => {
                let desc = self.assemble()?;
                let id = self.next_id;
                self.next_id += 1;
                return Ok(RegResponse { value: id as u32, launch: Some((id, desc)) });
            }
            regs::STATUS | regs::TRANSFER_ID => return Err(FrontendError::ReadOnly(offset)),
            _ => return Err(FrontendError::UnmappedOffset(offset)),
        };
        if !is_read {
            *field = value;
        }
        plain(*field)
    }

    fn assemble(&self) -> Result<NdTransferDescriptor, FrontendError> {
        let (src_protocol, dst_protocol, options) = decode_config(u64::from(self.configuration))?;
        let base = TransferDescriptor1D {
            src_addr: u64::from(self.src_address),
            dst_addr: u64::from(self.dst_address),
            length: u64::from(self.transfer_length),
            src_protocol,
            dst_protocol,
            options,
        };
        let mut dims: Vec<NdDim> = self
            .dims
            .iter()
            .map(|d| NdDim {
                src_stride: i64::from(d.src_stride as i32),
                dst_stride: i64::from(d.dst_stride as i32),
                reps: u64::from(d.reps),
            })
            .collect();
        while dims.last().is_some_and(|d| d.reps == 1) {
            dims.pop();
        }
        Ok(NdTransferDescriptor { base, dims })
    }

    /// Records completion of every id up to `id`.
    pub fn complete_up_to(&mut self, id: u64) {
        self.last_completed_id = self.last_completed_id.max(id.min(self.next_id - 1));
    }
}

/// Register accesses that program and launch `d`.
pub fn program(d: &NdTransferDescriptor) -> Result<Vec<(u32, bool, u32)>, FrontendError> {
    if d.dims.len() > 2 {
        return Err(FrontendError::TooManyDims);
    }
    let b = &d.base;
    let mut ops = vec![
        (regs::SRC, false, b.src_addr as u32),
        (regs::DST, false, b.dst_addr as u32),
        (regs::LEN, false, b.length as u32),
        (regs::CONFIG, false, encode_config(b) as u32),
    ];
    for (i, base) in [regs::DIM2, regs::DIM3].into_iter().enumerate() {
        let dim = d.dims.get(i).copied().unwrap_or(NdDim { src_stride: 0, dst_stride: 0, reps: 1 });
        ops.push((base, false, dim.src_stride as u32));
        ops.push((base + 4, false, dim.dst_stride as u32));
        ops.push((base + 8, false, dim.reps as u32));
    }
    ops.push((regs::TRANSFER_ID, true, 0));
    Ok(ops)
}

/// Sentinel `next` pointer ending a chain.
pub const END: u64 = u64::MAX;
pub const DESC_BYTES: u64 = 40;
/// Cycle guard for descriptor chains.
pub const MAX_CHAIN: usize = 1 << 16;

/// In-memory descriptor: five little-endian 64-bit words in the order
/// next, backend_config, length, src, dst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Descriptor64 {
    pub next: u64,
    pub config: u64,
    pub length: u64,
    pub src: u64,
    pub dst: u64,
}

impl Descriptor64 {
    pub fn from_transfer(d: &TransferDescriptor1D, next: u64) -> Self {
        Descriptor64 { next, config: encode_config(d), length: d.length, src: d.src_addr, dst: d.dst_addr }
    }

    pub fn encode(&self) -> [u8; 40] {
        let mut out = [0u8; 40];
        for (i, w) in [self.next, self.config, self.length, self.src, self.dst].iter().enumerate() {
            out[i * 8..i * 8 + 8].copy_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8; 40]) -> Self {
        let w = |i: usize| u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().expect("8 bytes"));
        Descriptor64 { next: w(0), config: w(1), length: w(2), src: w(3), dst: w(4) }
    }

    pub fn to_transfer(&self) -> Result<TransferDescriptor1D, FrontendError> {
        let (src_protocol, dst_protocol, options) = decode_config(self.config)?;
        Ok(TransferDescriptor1D {
            src_addr: self.src,
            dst_addr: self.dst,
            length: self.length,
            src_protocol,
            dst_protocol,
            options,
        })
    }
}

/// Decodes the descriptor at `ptr`; the second value is the next pointer,
/// `None` at the end of the chain.
pub fn fetch_descriptor(mem: &Memory, ptr: Addr) -> Result<(Descriptor64, Option<Addr>), FrontendError> {
    if !ptr.is_multiple_of(8) {
        return Err(FrontendError::Misaligned(ptr));
    }
    let bytes = mem.read(ptr, DESC_BYTES).map_err(|_| FrontendError::Unmapped(ptr))?;
    let d = Descriptor64::decode(bytes.try_into().expect("40 bytes"));
    Ok((d, (d.next != END).then_some(d.next)))
}

/// Walks a chain from `head`, returning `(address, descriptor)` in order.
pub fn walk_chain(mem: &Memory, head: Addr, max_len: usize) -> Result<Vec<(Addr, Descriptor64)>, FrontendError> {
    let mut out = Vec::new();
    let mut ptr = (head != END).then_some(head);
    while let Some(p) = ptr {
        if out.len() == max_len {
            return Err(FrontendError::ChainTooLong(max_len));
        }
        let (d, next) = fetch_descriptor(mem, p)?;
        out.push((p, d));
        ptr = next;
    }
    Ok(out)
}

/// Writes `transfers` as a linked chain starting at `head`, one descriptor
/// every 40 bytes.
pub fn write_chain(mem: &mut Memory, head: Addr, transfers: &[TransferDescriptor1D]) -> Result<(), FrontendError> {
    if !head.is_multiple_of(8) {
        return Err(FrontendError::Misaligned(head));
    }
    for (i, t) in transfers.iter().enumerate() {
        let at = head + i as u64 * DESC_BYTES;
        let next = if i + 1 == transfers.len() { END } else { at + DESC_BYTES };
        mem.write(at, &Descriptor64::from_transfer(t, next).encode())
            .map_err(|_| FrontendError::Unmapped(at))?;
    }
    Ok(())
}

/// Launches produced by a front-end plus its port activity.
#[derive(Debug, Clone, Default)]
pub struct FrontendRun {
    pub launches: Vec<Launch>,
    pub fetch_port: Option<(String, PortCounters)>,
    pub trace: Vec<TraceEvent>,
}

fn launch_event(l: &Launch) -> TraceEvent {
    TraceEvent {
        cycle: l.cycle,
        unit: "fe".into(),
        event: TraceKind::Launch,
        addr: l.desc.base.src_addr,
        length: l.desc.total_bytes(),
        port: String::new(),
    }
}

/// Direct injection: one launch every `occupancy` cycles from `start`.
/// Occupancy 3 models the three-instruction launch sequence.
pub fn direct_launches(transfers: &[NdTransferDescriptor], start: u64, occupancy: u64) -> FrontendRun {
    let launches: Vec<Launch> = transfers
        .iter()
        .enumerate()
        .map(|(i, d)| Launch { id: i as u64 + 1, cycle: start + i as u64 * occupancy.max(1), desc: d.clone() })
        .collect();
    let trace = launches.iter().map(launch_event).collect();
    FrontendRun { launches, fetch_port: None, trace }
}

/// Register programming: each access takes one cycle; the launch happens
/// at the `transfer_id` read.
pub fn reg_launches(transfers: &[NdTransferDescriptor], start: u64) -> Result<FrontendRun, FrontendError> {
    let mut rf = RegFileState::default();
    let mut t = start;
    let mut launches = Vec::new();
    for d in transfers {
        for (off, is_read, v) in program(d)? {
            if let Some((id, desc)) = rf.access(off, is_read, v)?.launch {
                launches.push(Launch { id, cycle: t, desc });
            }
            t += 1;
        }
    }
    let trace = launches.iter().map(launch_event).collect();
    Ok(FrontendRun { launches, fetch_port: None, trace })
}

/// Descriptor front-end: fetches the chain at `head` over a dedicated port.
/// The next fetch issues the cycle after the beat carrying `next` arrives;
/// a transfer launches the cycle after its last descriptor beat.
pub fn desc_launches(
    mem: &Memory,
    head: Addr,
    port: &str,
    timing: EndpointTiming,
    dw: u32,
    start: u64,
) -> Result<FrontendRun, FrontendError> {
    let chain = walk_chain(mem, head, MAX_CHAIN)?;
    let transfers: Vec<TransferDescriptor1D> =
        chain.iter().map(|(_, d)| d.to_transfer()).collect::<Result<_, _>>()?;
    let bb = u64::from(dw / 8).max(1);
    let mut ep = Endpoint::new(timing, vec![]);
    let mut counters = PortCounters::default();
    let mut trace = Vec::new();
    let mut launches = Vec::new();
    let mut inflight: VecDeque<usize> = VecDeque::new();
    let mut next_issue = (!chain.is_empty()).then_some((0usize, start));
    let mut t = start;
    let beats = |addr: Addr| ((addr % bb) + DESC_BYTES).div_ceil(bb) as u32;
    // beat index carrying the last byte of `next`
    let next_beat = |addr: Addr| ((addr % bb + 7) / bb) as u32;
    while launches.len() < chain.len() {
        if let Some(beat) = ep.pop_read_beat(t) {
            let i = *inflight.front().expect("beat without request");
            let addr = chain[i].0;
            counters.read_beats += 1;
            counters.read_bytes += if beat.index == 0 { (bb - addr % bb).min(DESC_BYTES) } else {
                bb.min(addr % bb + DESC_BYTES - u64::from(beat.index) * bb)
            };
            if beat.index == next_beat(addr) && i + 1 < chain.len() {
                next_issue = Some((i + 1, t + 1));
            }
            if beat.last {
                inflight.pop_front();
                let l = Launch { id: i as u64 + 1, cycle: t + 1, desc: transfers[i].into() };
                trace.push(launch_event(&l));
                launches.push(l);
            }
        }
        if let Some((i, at)) = next_issue {
            if at <= t && ep.can_accept_read() {
                let addr = chain[i].0;
                ep.submit_read(i as u64, addr, DESC_BYTES, beats(addr), t).expect("capacity checked");
                counters.read_requests += 1;
                inflight.push_back(i);
                trace.push(TraceEvent {
                    cycle: t,
                    unit: "fe".into(),
                    event: TraceKind::Desc,
                    addr,
                    length: DESC_BYTES,
                    port: port.to_string(),
                });
                next_issue = None;
            }
        }
        t += 1;
    }
    trace.sort_by_key(|e| e.cycle);
    Ok(FrontendRun { launches, fetch_port: Some((port.to_string(), counters)), trace })
}
