// SPDX-License-Identifier: Apache-2.0

//! Back-end data plane: legalizer front, decoupled read and write managers,
//! a bounded dataflow element, and the error handler.
//!
//! Data moves as one global byte stream per back-end. Every accepted
//! transfer owns the next `length` stream offsets; its read bursts fill
//! them in order and its write bursts drain them in order. Realignment
//! between source and destination bus offsets falls out of this: a write
//! beat simply takes the stream bytes that land in its bus word.
//!
//! Each cycle runs, in order: write acknowledgments, one write data beat,
//! one read data beat into the buffer, one write request, one read
//! request, and the legalizer accepting a new transfer.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::legalizer::{legalize, LegalizeError};
use crate::memsys::{BusErrorKind, Endpoint, EndpointTiming, ErrorRule, Memory, MemsysError};
use crate::metrics::{ErrorReport, PortCounters, SkippedRange, TraceEvent, TraceKind, TransferRecord};
use crate::midend::RoutedTransfer;
use crate::protocol::{check_burst, BurstViolation, ProtocolId};
use crate::types::{Addr, Direction, EngineConfig, ErrorAction, InitPattern, Side};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("contract violation: {side} burst {addr:#x}+{length:#x} on {protocol}: {violation}")]
    ContractViolation {
        side: Side,
        addr: Addr,
        length: u64,
        protocol: ProtocolId,
        violation: BurstViolation,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("deadlock: no progress since cycle {since} (now {now}): {detail}")]
    Deadlock { since: u64, now: u64, detail: String },
    #[error(transparent)]
    Memory(#[from] MemsysError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no error is awaiting an action")]
pub struct NoPendingError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("pseudorandom init pattern needs a non-zero seed")]
pub struct ZeroSeed;

/// Bytes produced by the `Init` read manager for a transfer of `length`.
///
/// The pseudorandom pattern is xorshift64 (`x ^= x << 13; x ^= x >> 7;
/// x ^= x << 17`), emitting each new state as 8 little-endian bytes.
pub fn init_read(pattern: InitPattern, offset: u64, length: u64) -> Result<Vec<u8>, ZeroSeed> {
    let n = length as usize;
    Ok(match pattern {
        InitPattern::Constant { value } => vec![value; n],
        InitPattern::Increment { start } => {
            let first = start.wrapping_add(offset as u8);
            (0..n).map(|i| first.wrapping_add(i as u8)).collect()
        }
        InitPattern::Pseudorandom { seed } => {
            if seed == 0 {
                return Err(ZeroSeed);
            }
            let step = |x: &mut u64| {
                *x ^= *x << 13;
                *x ^= *x >> 7;
                *x ^= *x << 17;
            };
            let mut x = seed;
            for _ in 0..offset / 8 {
                step(&mut x);
            }
            let skip = (offset % 8) as usize;
            let mut out = Vec::with_capacity(n + 16);
            while out.len() < n + skip {
                step(&mut x);
                out.extend_from_slice(&x.to_le_bytes());
            }
            out.drain(..skip);
            out.truncate(n);
            out
        }
    })
}

/// Transformer applied to bytes entering the dataflow element.
pub trait StreamHook: Send {
    fn transform(&mut self, stream_offset: u64, bytes: &mut [u8]);
}

/// The identity hook.
#[derive(Debug, Clone, Copy, Default)]
pub struct Passthrough;

impl StreamHook for Passthrough {
    fn transform(&mut self, _: u64, _: &mut [u8]) {}
}

/// How the error handler obtains its action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    /// Apply each transfer's `error_action_default` immediately.
    #[default]
    Auto,
    /// Pause and wait for [`Backend::handle_error`].
    Manual,
}

/// Launch latency contributed by the back-end.
pub fn backend_latency(cfg: &EngineConfig) -> u64 {
    if cfg.has_legalizer {
        2
    } else {
        1
    }
}

/// A port of a back-end bound to its endpoint.
#[derive(Debug, Clone)]
pub struct PortBinding {
    pub name: String,
    pub protocol: ProtocolId,
    pub direction: Direction,
    /// Index into the shared memory list; `None` for `Init`.
    pub memory: Option<usize>,
    pub timing: EndpointTiming,
    pub errors: Vec<ErrorRule>,
}

struct Port {
    name: String,
    protocol: ProtocolId,
    memory: Option<usize>,
    ep: Endpoint,
    counters: PortCounters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RState {
    Waiting,
    Issued { tag: u64 },
    Errored,
    Done,
    Void,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WState {
    Waiting,
    Issued { tag: u64 },
    Errored,
    Acked,
    Dropped,
}

#[derive(Debug, Clone)]
struct ReadSlot {
    tid: usize,
    seq: u32,
    addr: Addr,
    len: u64,
    s0: u64,
    port: usize,
    ready_at: u64,
    state: RState,
    consumed: u64,
    beats: u32,
}

#[derive(Debug, Clone)]
struct WriteSlot {
    tid: usize,
    seq: u32,
    addr: Addr,
    len: u64,
    s0: u64,
    port: usize,
    ready_at: u64,
    state: WState,
    sent: u32,
    beats: u32,
    retained: Vec<Option<u8>>,
    drained: bool,
}

struct Xfer {
    rec: TransferRecord,
    stream_base: u64,
    reads_left: u32,
    writes_left: u32,
    init: Option<Vec<u8>>,
    action: ErrorAction,
}

#[derive(Debug, Clone, Copy)]
enum PendingKind {
    Read(usize),
    Write(usize),
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    report: ErrorReport,
    kind: PendingKind,
}

/// Byte span `(offset, length)` of beat `j` of a burst.
fn beat_span(protocol: ProtocolId, addr: Addr, len: u64, bb: u64, j: u32) -> (u64, u64) {
    let first = if protocol.capabilities().addressed {
        len.min(bb - addr % bb)
    } else {
        len.min(bb)
    };
    if j == 0 {
        return (0, first);
    }
    let off = first + u64::from(j - 1) * bb;
    (off, bb.min(len - off))
}

fn beat_count(protocol: ProtocolId, addr: Addr, len: u64, bb: u64) -> u32 {
    let offset = if protocol.capabilities().addressed { addr % bb } else { 0 };
    (offset + len).div_ceil(bb) as u32
}

/// One back-end instance.
pub struct Backend {
    idx: usize,
    unit: String,
    cfg: EngineConfig,
    bb: u64,
    be_lat: u64,
    mode: ErrorMode,
    trace_on: bool,
    ports: Vec<Port>,
    hook: Box<dyn StreamHook>,

    incoming: VecDeque<RoutedTransfer>,
    legalizer_free: u64,
    xfers: Vec<Xfer>,
    open_xfers: usize,
    stream_end: u64,

    rq: VecDeque<ReadSlot>,
    rq_base: usize,
    ar_idx: usize,
    rc_idx: usize,
    live_reads: HashMap<u64, usize>,

    wq: VecDeque<WriteSlot>,
    wq_base: usize,
    aw_idx: usize,
    w_idx: usize,
    live_writes: HashMap<u64, usize>,
    replays: VecDeque<usize>,

    buffer: VecDeque<u8>,
    staging: VecDeque<u8>,
    staging_slot: usize,
    wpos: u64,
    voids: BTreeMap<u64, u64>,

    next_tag: u64,
    pending: VecDeque<Pending>,
    first_request: Option<u64>,
    last_response: Option<u64>,
    skipped: Vec<SkippedRange>,
    errors: Vec<ErrorReport>,
    trace: Vec<TraceEvent>,
}

impl std::fmt::Debug for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backend")
            .field("idx", &self.idx)
            .field("open_xfers", &self.open_xfers)
            .field("incoming", &self.incoming.len())
            .finish_non_exhaustive()
    }
}

impl Backend {
    pub fn new(
        idx: usize,
        cfg: EngineConfig,
        bindings: Vec<PortBinding>,
        mode: ErrorMode,
        trace: bool,
    ) -> Self {
        let ports = bindings
            .into_iter()
            .map(|b| Port {
                name: b.name,
                protocol: b.protocol,
                memory: b.memory,
                ep: Endpoint::new(b.timing, b.errors),
                counters: PortCounters::default(),
            })
            .collect();
        Backend {
            idx,
            unit: format!("be{idx}"),
            bb: cfg.bus_bytes(),
            be_lat: backend_latency(&cfg),
            cfg,
            mode,
            trace_on: trace,
            ports,
            hook: Box::new(Passthrough),
            incoming: VecDeque::new(),
            legalizer_free: 0,
            xfers: Vec::new(),
            open_xfers: 0,
            stream_end: 0,
            rq: VecDeque::new(),
            rq_base: 0,
            ar_idx: 0,
            rc_idx: 0,
            live_reads: HashMap::new(),
            wq: VecDeque::new(),
            wq_base: 0,
            aw_idx: 0,
            w_idx: 0,
            live_writes: HashMap::new(),
            replays: VecDeque::new(),
            buffer: VecDeque::new(),
            staging: VecDeque::new(),
            staging_slot: 0,
            wpos: 0,
            voids: BTreeMap::new(),
            next_tag: 1,
            pending: VecDeque::new(),
            first_request: None,
            last_response: None,
            skipped: Vec::new(),
            errors: Vec::new(),
            trace: Vec::new(),
        }
    }

    pub fn set_hook(&mut self, hook: Box<dyn StreamHook>) {
        self.hook = hook;
    }

    /// Queues a transfer; it reaches the legalizer at `t.cycle`.
    pub fn enqueue(&mut self, t: RoutedTransfer) {
        self.incoming.push_back(t);
    }

    pub fn is_idle(&self) -> bool {
        self.incoming.is_empty() && self.open_xfers == 0
    }

    /// True while accepted work is incomplete.
    pub fn busy(&self) -> bool {
        self.open_xfers > 0
    }

    pub fn pending_error(&self) -> Option<&ErrorReport> {
        self.pending.front().map(|p| &p.report)
    }

    pub fn window(&self) -> Option<(u64, u64)> {
        self.first_request.zip(self.last_response)
    }

    pub fn buffer_occupancy(&self) -> usize {
        self.buffer.len()
    }

    pub fn reads_outstanding(&self) -> u32 {
        self.ports.iter().map(|p| p.ep.reads_outstanding()).sum()
    }

    pub fn writes_outstanding(&self) -> u32 {
        self.ports.iter().map(|p| p.ep.writes_outstanding()).sum()
    }

    pub fn port_counters(&self) -> Vec<(String, PortCounters)> {
        self.ports.iter().map(|p| (p.name.clone(), p.counters)).collect()
    }

    pub fn records(&self) -> impl Iterator<Item = &TransferRecord> {
        self.xfers.iter().map(|x| &x.rec)
    }

    pub fn skipped(&self) -> &[SkippedRange] {
        &self.skipped
    }

    pub fn errors(&self) -> &[ErrorReport] {
        &self.errors
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        std::mem::take(&mut self.trace)
    }

    fn emit(&mut self, cycle: u64, event: TraceKind, addr: Addr, length: u64, port: usize) {
        if self.trace_on {
            self.trace.push(TraceEvent {
                cycle,
                unit: self.unit.clone(),
                event,
                addr,
                length,
                port: self.ports[port].name.clone(),
            });
        }
    }

    fn rslot(&mut self, abs: usize) -> &mut ReadSlot {
        &mut self.rq[abs - self.rq_base]
    }

    fn wslot(&mut self, abs: usize) -> &mut WriteSlot {
        &mut self.wq[abs - self.wq_base]
    }

    /// Stream offset up to which read data is resolved (pushed or void).
    fn frontier(&self) -> u64 {
        match self.rq.get(self.rc_idx - self.rq_base) {
            Some(s) => s.s0 + s.consumed,
            None => self.stream_end,
        }
    }

    fn add_void(&mut self, from: u64, to: u64) {
        if from < to {
            self.voids.insert(from, to);
        }
    }

    fn is_void(&self, o: u64) -> bool {
        self.voids.range(..=o).next_back().is_some_and(|(_, &end)| o < end)
    }

    /// Advances one simulated cycle. Returns whether any state changed.
    pub fn step(&mut self, now: u64, mems: &mut [Memory]) -> Result<bool, SimError> {
        let mut progress = self.ack_stage(now)?;
        progress |= self.w_stage(now, mems)?;
        let paused = !self.pending.is_empty();
        progress |= self.r_stage(now, mems, paused)?;
        if !paused {
            progress |= self.aw_stage(now)?;
            progress |= self.ar_stage(now)?;
        }
        progress |= self.accept_stage(now, mems)?;
        self.prune();
        Ok(progress)
    }

    /// Earliest future cycle at which a timed condition may change.
    pub fn next_event(&self, now: u64) -> Option<u64> {
        let mut best: Option<u64> = None;
        let mut consider = |t: Option<u64>| {
            if let Some(t) = t.filter(|&t| t > now) {
                best = Some(best.map_or(t, |b| b.min(t)));
            }
        };
        consider(self.incoming.front().map(|t| t.cycle.max(self.legalizer_free)));
        for p in &self.ports {
            consider(p.ep.next_read_beat_at());
            consider(p.ep.next_ack_at());
        }
        if let Some(s) = self.rq.get(self.ar_idx.saturating_sub(self.rq_base)) {
            consider(Some(s.ready_at));
        }
        if let Some(s) = self.wq.get(self.aw_idx.saturating_sub(self.wq_base)) {
            consider(Some(s.ready_at));
        }
        for &r in &self.replays {
            consider(Some(self.wq[r - self.wq_base].ready_at));
        }
        best
    }

    fn respond(&mut self, now: u64) {
        self.last_response = Some(self.last_response.map_or(now, |l| l.max(now)));
    }

    fn request(&mut self, now: u64) {
        self.first_request.get_or_insert(now);
    }

    // ---- write acknowledgments -------------------------------------------------

    fn ack_stage(&mut self, now: u64) -> Result<bool, SimError> {
        let mut progress = false;
        for p in 0..self.ports.len() {
            let Some(ack) = self.ports[p].ep.pop_ack(now) else { continue };
            progress = true;
            self.respond(now);
            let abs = self.live_writes.remove(&ack.tag).expect("ack for unknown write");
            let (addr, len) = {
                let s = self.wslot(abs);
                (s.addr, s.len)
            };
            self.emit(now, TraceKind::B, addr, len, p);
            match ack.error {
                None => {
                    let s = self.wslot(abs);
                    s.state = WState::Acked;
                    s.retained = Vec::new();
                    let tid = self.wq[abs - self.wq_base].tid;
                    self.xfers[tid].writes_left -= 1;
                    self.maybe_complete(tid, now);
                }
                Some(cause) => {
                    self.wslot(abs).state = WState::Errored;
                    self.raise(now, PendingKind::Write(abs), cause);
                }
            }
        }
        Ok(progress)
    }

    // ---- write data ------------------------------------------------------------

    fn w_stage(&mut self, now: u64, mems: &mut [Memory]) -> Result<bool, SimError> {
        let mut progress = self.drain_dropped();
        let head_mid_burst = self
            .wq
            .get(self.w_idx - self.wq_base)
            .is_some_and(|s| matches!(s.state, WState::Issued { .. }) && s.sent > 0 && s.sent < s.beats);
        if !head_mid_burst {
            if let Some(&r) = self.replays.front() {
                let s = &self.wq[r - self.wq_base];
                if matches!(s.state, WState::Issued { .. }) && s.sent < s.beats {
                    self.send_replay_beat(r, now, mems)?;
                    return Ok(true);
                }
            }
        }
        let Some(s) = self.wq.get(self.w_idx - self.wq_base) else { return Ok(progress) };
        let WState::Issued { tag } = s.state else { return Ok(progress) };
        let (off, n) = beat_span(self.ports[s.port].protocol, s.addr, s.len, self.bb, s.sent);
        let end = s.s0 + off + n;
        if self.frontier() < end {
            return Ok(progress);
        }
        debug_assert_eq!(self.wpos, s.s0 + off);
        let (addr, port) = (s.addr + off, s.port);
        let mut data = Vec::with_capacity(n as usize);
        for o in self.wpos..end {
            data.push(if self.is_void(o) { None } else { self.buffer.pop_front() });
        }
        self.wpos = end;
        self.write_beat(port, addr, &data, mems)?;
        let keep = self.cfg.has_error_handler;
        let abs = self.w_idx;
        let s = self.wslot(abs);
        if keep {
            s.retained.extend_from_slice(&data);
        }
        s.sent += 1;
        let last = s.sent == s.beats;
        if last {
            self.ports[port].ep.finish_write(tag, now);
            self.w_idx += 1;
        }
        self.emit(now, TraceKind::W, addr, n, port);
        progress = true;
        Ok(progress)
    }

    fn write_beat(
        &mut self,
        port: usize,
        addr: Addr,
        data: &[Option<u8>],
        mems: &mut [Memory],
    ) -> Result<(), SimError> {
        let p = &mut self.ports[port];
        p.counters.write_beats += 1;
        p.counters.write_bytes += data.iter().filter(|b| b.is_some()).count() as u64;
        let mem = &mut mems[p.memory.expect("write ports are memory backed")];
        for (i, b) in data.iter().enumerate() {
            if let Some(b) = b {
                mem.write_byte(addr + i as u64, *b)?;
            }
        }
        Ok(())
    }

    fn send_replay_beat(&mut self, abs: usize, now: u64, mems: &mut [Memory]) -> Result<(), SimError> {
        let bb = self.bb;
        let s = &self.wq[abs - self.wq_base];
        let WState::Issued { tag } = s.state else { unreachable!() };
        let (off, n) = beat_span(self.ports[s.port].protocol, s.addr, s.len, bb, s.sent);
        let data: Vec<Option<u8>> = s.retained[off as usize..(off + n) as usize].to_vec();
        let (addr, port) = (s.addr + off, s.port);
        self.write_beat(port, addr, &data, mems)?;
        let s = self.wslot(abs);
        s.sent += 1;
        if s.sent == s.beats {
            self.ports[port].ep.finish_write(tag, now);
            self.replays.pop_front();
        }
        self.emit(now, TraceKind::W, addr, n, port);
        Ok(())
    }

    /// Consumes the stream bytes of dropped write bursts at the W head.
    fn drain_dropped(&mut self) -> bool {
        let mut progress = false;
        while let Some(s) = self.wq.get(self.w_idx - self.wq_base) {
            if s.state != WState::Dropped {
                break;
            }
            let end = (s.s0 + s.len).min(self.frontier());
            while self.wpos < end {
                if !self.is_void(self.wpos) {
                    self.buffer.pop_front();
                }
                self.wpos += 1;
                progress = true;
            }
            let s = &self.wq[self.w_idx - self.wq_base];
            if self.wpos < s.s0 + s.len {
                break;
            }
            let abs = self.w_idx;
            self.wslot(abs).drained = true;
            self.w_idx += 1;
        }
        progress
    }

    // ---- read data -------------------------------------------------------------

    fn r_stage(&mut self, now: u64, mems: &mut [Memory], paused: bool) -> Result<bool, SimError> {
        let mut progress = false;
        // beats of squashed or errored requests are drained and dropped
        for p in 0..self.ports.len() {
            if let Some(b) = self.ports[p].ep.peek_read_beat(now) {
                if !self.live_reads.contains_key(&b.tag) {
                    self.ports[p].ep.pop_read_beat(now);
                    self.ports[p].counters.read_beats += 1;
                    self.respond(now);
                    self.emit(now, TraceKind::R, 0, 0, p);
                    progress = true;
                }
            }
        }
        if paused {
            return Ok(progress);
        }
        progress |= self.push_staging(now);
        if !self.staging.is_empty() {
            return Ok(progress);
        }
        let Some(s) = self.rq.get(self.rc_idx - self.rq_base) else { return Ok(progress) };
        let RState::Issued { tag } = s.state else { return Ok(progress) };
        let port = s.port;
        let Some(beat) = self.ports[port].ep.peek_read_beat(now) else { return Ok(progress) };
        if beat.tag != tag {
            return Ok(progress);
        }
        let (addr, len, tid, s0) = (s.addr, s.len, s.tid, s.s0);
        self.ports[port].ep.pop_read_beat(now);
        self.respond(now);
        let abs = self.rc_idx;
        let (off, n) = beat_span(self.ports[port].protocol, addr, len, self.bb, beat.index);
        self.ports[port].counters.read_beats += 1;
        self.emit(now, TraceKind::R, addr + off, n, port);
        if let Some(cause) = beat.error {
            self.live_reads.remove(&tag);
            self.rslot(abs).state = RState::Errored;
            self.raise(now, PendingKind::Read(abs), cause);
            return Ok(true);
        }
        self.ports[port].counters.read_bytes += n;
        let mut bytes = match self.ports[port].memory {
            Some(m) => mems[m].read(addr + off, n)?.to_vec(),
            None => {
                let x = &self.xfers[tid];
                let base = (s0 - x.stream_base + off) as usize;
                x.init.as_ref().expect("init data")[base..base + n as usize].to_vec()
            }
        };
        self.hook.transform(s0 + off, &mut bytes);
        self.staging.extend(bytes);
        self.staging_slot = abs;
        if beat.last {
            self.live_reads.remove(&tag);
        }
        self.push_staging(now);
        Ok(true)
    }

    fn push_staging(&mut self, now: u64) -> bool {
        if self.staging.is_empty() {
            return false;
        }
        let cap = self.cfg.buffer_depth as usize * self.bb as usize;
        let n = self.staging.len().min(cap.saturating_sub(self.buffer.len()));
        if n == 0 {
            return false;
        }
        self.buffer.extend(self.staging.drain(..n));
        let abs = self.staging_slot;
        let s = self.rslot(abs);
        s.consumed += n as u64;
        if s.consumed == s.len {
            s.state = RState::Done;
            let tid = s.tid;
            self.xfers[tid].reads_left -= 1;
            self.advance_rc();
            self.maybe_complete(tid, now);
        }
        true
    }

    fn advance_rc(&mut self) {
        while let Some(s) = self.rq.get(self.rc_idx - self.rq_base) {
            if matches!(s.state, RState::Done | RState::Void) {
                self.rc_idx += 1;
            } else {
                break;
            }
        }
    }

    // ---- requests --------------------------------------------------------------

    fn contract(&self, side: Side, protocol: ProtocolId, addr: Addr, len: u64) -> Result<(), SimError> {
        if self.cfg.has_legalizer {
            return Ok(());
        }
        check_burst(protocol, addr, len, self.cfg.dw, None).map_err(|violation| {
            SimError::ContractViolation { side, addr, length: len, protocol, violation }
        })
    }

    fn aw_stage(&mut self, now: u64) -> Result<bool, SimError> {
        if self.writes_outstanding() >= self.cfg.nax_write {
            return Ok(false);
        }
        if let Some(pos) = self
            .replays
            .iter()
            .position(|&r| self.wq[r - self.wq_base].state == WState::Waiting)
        {
            let abs = self.replays[pos];
            let s = &self.wq[abs - self.wq_base];
            if s.ready_at <= now && self.ports[s.port].ep.can_accept_write() {
                self.issue_write(abs, now)?;
                return Ok(true);
            }
            return Ok(false);
        }
        while let Some(s) = self.wq.get(self.aw_idx - self.wq_base) {
            if s.state == WState::Waiting {
                break;
            }
            self.aw_idx += 1;
        }
        let Some(s) = self.wq.get(self.aw_idx - self.wq_base) else { return Ok(false) };
        if s.ready_at > now || self.frontier() <= s.s0 || !self.ports[s.port].ep.can_accept_write() {
            return Ok(false);
        }
        let abs = self.aw_idx;
        self.issue_write(abs, now)?;
        self.aw_idx += 1;
        Ok(true)
    }

    fn issue_write(&mut self, abs: usize, now: u64) -> Result<(), SimError> {
        let s = &self.wq[abs - self.wq_base];
        let (port, addr, len) = (s.port, s.addr, s.len);
        self.contract(Side::Write, self.ports[port].protocol, addr, len)?;
        let tag = self.next_tag;
        self.next_tag += 1;
        self.ports[port].ep.submit_write(tag, addr, len)?;
        self.ports[port].counters.write_requests += 1;
        self.live_writes.insert(tag, abs);
        let s = self.wslot(abs);
        s.state = WState::Issued { tag };
        s.sent = 0;
        self.request(now);
        self.emit(now, TraceKind::Aw, addr, len, port);
        Ok(())
    }

    fn ar_stage(&mut self, now: u64) -> Result<bool, SimError> {
        while let Some(s) = self.rq.get(self.ar_idx - self.rq_base) {
            if s.state == RState::Waiting {
                break;
            }
            self.ar_idx += 1;
        }
        let Some(s) = self.rq.get(self.ar_idx - self.rq_base) else { return Ok(false) };
        if s.ready_at > now
            || self.reads_outstanding() >= self.cfg.nax_read
            || !self.ports[s.port].ep.can_accept_read()
        {
            return Ok(false);
        }
        let (port, addr, len, beats, tid) = (s.port, s.addr, s.len, s.beats, s.tid);
        self.contract(Side::Read, self.ports[port].protocol, addr, len)?;
        let tag = self.next_tag;
        self.next_tag += 1;
        self.ports[port].ep.submit_read(tag, addr, len, beats, now)?;
        self.ports[port].counters.read_requests += 1;
        let abs = self.ar_idx;
        self.live_reads.insert(tag, abs);
        self.rslot(abs).state = RState::Issued { tag };
        self.xfers[tid].rec.first_read.get_or_insert(now);
        self.request(now);
        self.emit(now, TraceKind::Ar, addr, len, port);
        self.ar_idx += 1;
        Ok(true)
    }

    // ---- legalizer -------------------------------------------------------------

    fn accept_stage(&mut self, now: u64, mems: &[Memory]) -> Result<bool, SimError> {
        if self.legalizer_free > now {
            return Ok(false);
        }
        let Some(front) = self.incoming.front() else { return Ok(false) };
        if front.cycle > now {
            return Ok(false);
        }
        let t = self.incoming.pop_front().expect("front exists");
        let d = t.desc;
        let src = self
            .cfg
            .port_for(d.src_protocol, Side::Read)
            .ok_or_else(|| SimError::Config(format!("no read port for protocol {}", d.src_protocol)))?;
        let dst = self
            .cfg
            .port_for(d.dst_protocol, Side::Write)
            .ok_or_else(|| SimError::Config(format!("no write port for protocol {}", d.dst_protocol)))?;
        for (port, addr) in [(src, d.src_addr), (dst, d.dst_addr)] {
            if let Some(m) = self.ports[port].memory {
                if !mems[m].contains(addr, d.length) {
                    return Err(SimError::Config(format!(
                        "transfer {addr:#x}+{:#x} is outside the memory of port `{}`",
                        d.length, self.ports[port].name
                    )));
                }
            }
        }
        let init = if d.src_protocol == ProtocolId::Init {
            Some(
                init_read(d.options.init_pattern, d.options.init_offset, d.length)
                    .map_err(|e| SimError::Config(e.to_string()))?,
            )
        } else {
            None
        };
        let tid = self.xfers.len();
        let mut rec = TransferRecord {
            launch_id: t.launch_id,
            backend: self.idx,
            desc: d,
            arrival: t.cycle,
            accepted: now,
            first_read: None,
            completed: None,
            failed: false,
            intra_port: self.ports[src].name == self.ports[dst].name,
            read_bursts: 0,
            write_bursts: 0,
        };
        let lt = match legalize(&d, &self.cfg) {
            Ok(lt) => lt,
            Err(LegalizeError::ZeroLengthRejected) => {
                rec.failed = true;
                rec.completed = Some(now);
                self.xfers.push(Xfer {
                    rec,
                    stream_base: self.stream_end,
                    reads_left: 0,
                    writes_left: 0,
                    init: None,
                    action: ErrorAction::Continue,
                });
                self.emit(now, TraceKind::Error, d.dst_addr, 0, dst);
                self.emit(now, TraceKind::Done, d.dst_addr, 0, dst);
                self.legalizer_free = now + 1;
                return Ok(true);
            }
        };
        rec.read_bursts = lt.read_bursts.len() as u32;
        rec.write_bursts = lt.write_bursts.len() as u32;
        let base = self.stream_end;
        for (i, b) in lt.read_bursts.iter().enumerate() {
            self.rq.push_back(ReadSlot {
                tid,
                seq: b.seq,
                addr: b.addr,
                len: b.length,
                s0: base + (b.addr - d.src_addr),
                port: src,
                ready_at: now + self.be_lat + i as u64,
                state: RState::Waiting,
                consumed: 0,
                beats: beat_count(b.protocol, b.addr, b.length, self.bb),
            });
        }
        for (i, b) in lt.write_bursts.iter().enumerate() {
            self.wq.push_back(WriteSlot {
                tid,
                seq: b.seq,
                addr: b.addr,
                len: b.length,
                s0: base + (b.addr - d.dst_addr),
                port: dst,
                ready_at: now + self.be_lat + i as u64,
                state: WState::Waiting,
                sent: 0,
                beats: beat_count(b.protocol, b.addr, b.length, self.bb),
                retained: Vec::new(),
                drained: false,
            });
        }
        self.stream_end += d.length;
        let steps = lt.read_bursts.len().max(lt.write_bursts.len()).max(1) as u64;
        self.legalizer_free = now + steps;
        self.xfers.push(Xfer {
            rec,
            stream_base: base,
            reads_left: lt.read_bursts.len() as u32,
            writes_left: lt.write_bursts.len() as u32,
            init,
            action: if self.cfg.has_error_handler {
                d.options.error_action_default
            } else {
                ErrorAction::Continue
            },
        });
        self.open_xfers += 1;
        self.maybe_complete(tid, now);
        Ok(true)
    }

    fn maybe_complete(&mut self, tid: usize, now: u64) {
        let x = &mut self.xfers[tid];
        if x.rec.completed.is_some() || x.reads_left > 0 || x.writes_left > 0 {
            return;
        }
        x.rec.completed = Some(now);
        self.open_xfers -= 1;
        let (addr, len, failed) = (x.rec.desc.dst_addr, x.rec.desc.length, x.rec.failed);
        let port = self.cfg.port_for(x.rec.desc.dst_protocol, Side::Write).unwrap_or(0);
        self.emit(now, TraceKind::Done, addr, if failed { 0 } else { len }, port);
    }

    fn prune(&mut self) {
        let keep_r = self.rc_idx.min(self.ar_idx);
        while self.rq_base < keep_r
            && self.rq.front().is_some_and(|s| matches!(s.state, RState::Done | RState::Void))
        {
            self.rq.pop_front();
            self.rq_base += 1;
        }
        let keep_w = self.w_idx.min(self.aw_idx);
        while self.wq_base < keep_w
            && self.wq.front().is_some_and(|s| {
                s.state == WState::Acked || (s.state == WState::Dropped && s.drained)
            })
        {
            self.wq.pop_front();
            self.wq_base += 1;
        }
        let w = self.wpos;
        while let Some((&start, &end)) = self.voids.iter().next() {
            if end <= w {
                self.voids.remove(&start);
            } else {
                break;
            }
        }
    }

    // ---- error handler ---------------------------------------------------------

    fn raise(&mut self, now: u64, kind: PendingKind, cause: BusErrorKind) {
        let (tid, side, addr, seq) = match kind {
            PendingKind::Read(a) => {
                let s = &self.rq[a - self.rq_base];
                (s.tid, Side::Read, s.addr, s.seq)
            }
            PendingKind::Write(a) => {
                let s = &self.wq[a - self.wq_base];
                (s.tid, Side::Write, s.addr, s.seq)
            }
        };
        let manual = self.mode == ErrorMode::Manual && self.cfg.has_error_handler;
        let report = ErrorReport {
            launch_id: self.xfers[tid].rec.launch_id,
            backend: self.idx,
            side,
            addr,
            seq,
            cause,
            cycle: now,
            awaiting_action: manual,
        };
        self.errors.push(report);
        let port = match kind {
            PendingKind::Read(a) => self.rq[a - self.rq_base].port,
            PendingKind::Write(a) => self.wq[a - self.wq_base].port,
        };
        self.emit(now, TraceKind::Error, addr, 0, port);
        if manual {
            self.pending.push_back(Pending { report, kind });
        } else {
            let action = self.xfers[tid].action;
            self.resolve(kind, action, now);
        }
    }

    /// Resolves the oldest error awaiting an action.
    pub fn handle_error(&mut self, action: ErrorAction, now: u64) -> Result<(), NoPendingError> {
        let p = self.pending.pop_front().ok_or(NoPendingError)?;
        if let Some(e) = self.errors.iter_mut().rev().find(|e| **e == p.report) {
            e.awaiting_action = false;
        }
        self.resolve(p.kind, action, now);
        Ok(())
    }

    fn flag(&mut self, tid: usize, side: Side, s0: u64, len: u64) {
        let x = &self.xfers[tid];
        self.skipped.push(SkippedRange {
            launch_id: x.rec.launch_id,
            side,
            dst_addr: x.rec.desc.dst_addr + (s0 - x.stream_base),
            length: len,
        });
    }

    fn void_read(&mut self, abs: usize) {
        let s = &mut self.rq[abs - self.rq_base];
        if let RState::Issued { tag } = s.state {
            self.live_reads.remove(&tag);
        }
        if matches!(s.state, RState::Done | RState::Void) {
            return;
        }
        s.state = RState::Void;
        let (from, to, tid) = (s.s0 + s.consumed, s.s0 + s.len, s.tid);
        if self.staging_slot == abs && !self.staging.is_empty() {
            self.staging.clear();
        }
        self.add_void(from, to);
        self.xfers[tid].reads_left -= 1;
    }

    fn resolve(&mut self, kind: PendingKind, action: ErrorAction, now: u64) {
        match kind {
            PendingKind::Read(abs) => {
                let (tid, s0, len) = {
                    let s = &self.rq[abs - self.rq_base];
                    (s.tid, s.s0, s.len)
                };
                match action {
                    ErrorAction::Continue => {
                        self.void_read(abs);
                        self.flag(tid, Side::Read, s0, len);
                    }
                    ErrorAction::Abort => {
                        self.xfers[tid].rec.failed = true;
                        let end = self.rq_base + self.rq.len();
                        for a in abs..end {
                            if self.rq[a - self.rq_base].tid == tid {
                                self.void_read(a);
                            }
                        }
                        for i in 0..self.wq.len() {
                            let s = &mut self.wq[i];
                            if s.tid == tid && s.state == WState::Waiting && s.s0 >= s0 {
                                s.state = WState::Dropped;
                                self.xfers[tid].writes_left -= 1;
                            }
                        }
                    }
                    ErrorAction::Replay => {
                        let end = self.rq_base + self.rq.len();
                        for a in abs..end {
                            let s = &mut self.rq[a - self.rq_base];
                            match s.state {
                                RState::Issued { tag } => {
                                    self.live_reads.remove(&tag);
                                }
                                RState::Errored => {}
                                _ => continue,
                            }
                            s.state = RState::Waiting;
                            s.ready_at = now + 1;
                        }
                        self.ar_idx = self.ar_idx.min(abs);
                    }
                }
                self.advance_rc();
                self.maybe_complete(tid, now);
            }
            PendingKind::Write(abs) => {
                let (tid, s0, len) = {
                    let s = &self.wq[abs - self.wq_base];
                    (s.tid, s.s0, s.len)
                };
                match action {
                    ErrorAction::Continue => {
                        self.wslot(abs).state = WState::Acked;
                        self.xfers[tid].writes_left -= 1;
                        self.flag(tid, Side::Write, s0, len);
                    }
                    ErrorAction::Abort => {
                        self.wslot(abs).state = WState::Acked;
                        self.xfers[tid].writes_left -= 1;
                        self.xfers[tid].rec.failed = true;
                        for i in 0..self.wq.len() {
                            let s = &mut self.wq[i];
                            if s.tid == tid && s.state == WState::Waiting {
                                s.state = WState::Dropped;
                                self.xfers[tid].writes_left -= 1;
                            }
                        }
                        let end = self.rq_base + self.rq.len();
                        for a in self.rq_base..end {
                            if self.rq[a - self.rq_base].tid == tid {
                                self.void_read(a);
                            }
                        }
                        self.advance_rc();
                        // the dropped write slots before aw_idx are consumed by the W head
                        self.replays.retain(|&r| r != abs);
                    }
                    ErrorAction::Replay => {
                        let s = self.wslot(abs);
                        s.state = WState::Waiting;
                        s.ready_at = now + 1;
                        s.sent = 0;
                        self.replays.push_back(abs);
                    }
                }
                self.maybe_complete(tid, now);
            }
        }
    }
}
