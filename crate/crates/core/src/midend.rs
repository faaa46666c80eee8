// SPDX-License-Identifier: Apache-2.0

//! Mid-ends: stream transformers turning complex transfers into 1D
//! descriptors for the back-end(s).
//!
//! The pure transforms (`expand_nd`, `split_at_boundary`, `distribute`,
//! `rt_schedule`) are usable on their own. [`MidendChain`] composes them
//! into a timed pipeline where every stage emits at most one descriptor per
//! cycle and adds its configured latency.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{address_limit, NdDim, NdTransferDescriptor, Side, TransferDescriptor1D};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MidendError {
    #[error("generated {side} range leaves the {aw}-bit address space")]
    AddressOutOfRange { side: Side, aw: u32 },
    #[error("total length {total} is not a multiple of the 1D length {len_1d}")]
    IndivisibleTotal { total: u64, len_1d: u64 },
    #[error("piece at {addr:#x}+{length:#x} crosses a {boundary:#x} boundary")]
    UnsplitPiece { addr: u64, length: u64, boundary: u64 },
    #[error("boundary {0:#x} is not a power of two")]
    InvalidBoundary(u64),
    #[error("n-dimensional transfer reached the back-end without a tensor mid-end")]
    NdWithoutTensorMidend,
    #[error("invalid mid-end chain: {0}")]
    InvalidChain(String),
}

/// Iterator over the 1D transfers of an N-D descriptor, outermost dimension
/// slowest. Address bounds are verified once up front.
#[derive(Debug, Clone)]
pub struct NdExpansion {
    base: TransferDescriptor1D,
    dims: Vec<NdDim>,
    idx: Vec<u64>,
    emitted: u64,
    done: bool,
}

impl NdExpansion {
    pub fn new(d: &NdTransferDescriptor, aw: u32) -> Result<Self, MidendError> {
        check_nd_bounds(d, aw)?;
        Ok(NdExpansion {
            base: d.base,
            dims: d.dims.clone(),
            idx: vec![0; d.dims.len()],
            emitted: 0,
            done: d.dims.iter().any(|dim| dim.reps == 0),
        })
    }

    fn offset(&self, side: Side) -> i128 {
        self.dims
            .iter()
            .zip(&self.idx)
            .map(|(dim, &i)| {
                let stride = match side {
                    Side::Read => dim.src_stride,
                    Side::Write => dim.dst_stride,
                };
                i128::from(stride) * i128::from(i)
            })
            .sum()
    }
}

impl Iterator for NdExpansion {
    type Item = TransferDescriptor1D;

    fn next(&mut self) -> Option<TransferDescriptor1D> {
        if self.done {
            return None;
        }
        let mut d = self.base;
        d.src_addr = (i128::from(d.src_addr) + self.offset(Side::Read)) as u64;
        d.dst_addr = (i128::from(d.dst_addr) + self.offset(Side::Write)) as u64;
        d.options.init_offset += self.emitted * d.length;
        self.emitted += 1;
        // odometer increment, innermost dimension first
        self.done = true;
        for (i, dim) in self.idx.iter_mut().zip(&self.dims) {
            *i += 1;
            if *i < dim.reps {
                self.done = false;
                break;
            }
            *i = 0;
        }
        Some(d)
    }
}

/// The address is affine in the loop indices, so its extremes lie at the
/// corners of the index box.
fn check_nd_bounds(d: &NdTransferDescriptor, aw: u32) -> Result<(), MidendError> {
    if d.dims.iter().any(|dim| dim.reps == 0) {
        return Ok(());
    }
    let limit = address_limit(aw) as i128;
    for side in [Side::Read, Side::Write] {
        let base = i128::from(d.base.addr(side));
        let (mut lo, mut hi) = (base, base);
        for dim in &d.dims {
            let stride = match side {
                Side::Read => dim.src_stride,
                Side::Write => dim.dst_stride,
            };
            let span = i128::from(stride) * (i128::from(dim.reps) - 1);
            if span < 0 {
                lo += span;
            } else {
                hi += span;
            }
        }
        if lo < 0 || hi + i128::from(d.base.length) > limit || hi >= limit {
            return Err(MidendError::AddressOutOfRange { side, aw });
        }
    }
    Ok(())
}

/// Expands an N-D transfer into its 1D transfers in nested-loop order.
pub fn expand_nd(
    d: &NdTransferDescriptor,
    aw: u32,
) -> Result<Vec<TransferDescriptor1D>, MidendError> {
    Ok(NdExpansion::new(d, aw)?.collect())
}

/// Embedded-style 2D transfer: total length plus the length of each row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tensor2d {
    pub base: TransferDescriptor1D,
    pub total_len: u64,
    pub src_stride: i64,
    pub dst_stride: i64,
}

impl Tensor2d {
    /// The equivalent one-dimension N-D descriptor. `base.length` is the
    /// length of each 1D row.
    pub fn to_nd(&self) -> Result<NdTransferDescriptor, MidendError> {
        let len_1d = self.base.length;
        if len_1d == 0 || !self.total_len.is_multiple_of(len_1d) {
            return Err(MidendError::IndivisibleTotal { total: self.total_len, len_1d });
        }
        Ok(NdTransferDescriptor {
            base: self.base,
            dims: vec![NdDim {
                src_stride: self.src_stride,
                dst_stride: self.dst_stride,
                reps: self.total_len / len_1d,
            }],
        })
    }
}

pub fn expand_2d(d: &Tensor2d, aw: u32) -> Result<Vec<TransferDescriptor1D>, MidendError> {
    expand_nd(&d.to_nd()?, aw)
}

/// A power-of-two address boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct Boundary(u64);

impl Boundary {
    pub fn new(bytes: u64) -> Option<Boundary> {
        bytes.is_power_of_two().then_some(Boundary(bytes))
    }

    pub fn bytes(self) -> u64 {
        self.0
    }
}

impl TryFrom<u64> for Boundary {
    type Error = MidendError;

    fn try_from(v: u64) -> Result<Self, MidendError> {
        Boundary::new(v).ok_or(MidendError::InvalidBoundary(v))
    }
}

impl From<Boundary> for u64 {
    fn from(b: Boundary) -> u64 {
        b.0
    }
}

/// Splits `d` so no piece crosses a `boundary` line on `side`. Both
/// address ranges advance in lockstep.
pub fn split_at_boundary(
    d: &TransferDescriptor1D,
    boundary: Boundary,
    side: Side,
) -> Vec<TransferDescriptor1D> {
    let b = boundary.bytes();
    let mut out = Vec::new();
    let mut done = 0;
    while done < d.length {
        let addr = d.addr(side) + done;
        let len = (b - addr % b).min(d.length - done);
        let mut piece = *d;
        piece.src_addr = d.src_addr + done;
        piece.dst_addr = d.dst_addr + done;
        piece.length = len;
        piece.options.init_offset = d.options.init_offset + done;
        out.push(piece);
        done += len;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistPolicy {
    /// Port = (address / boundary) mod n.
    #[default]
    Address,
    RoundRobin,
}

fn dist_port(
    piece: &TransferDescriptor1D,
    n_ports: usize,
    boundary: Boundary,
    side: Side,
) -> Result<usize, MidendError> {
    let b = boundary.bytes();
    let addr = piece.addr(side);
    if piece.length > 0 && addr / b != (addr + piece.length - 1) / b {
        return Err(MidendError::UnsplitPiece { addr, length: piece.length, boundary: b });
    }
    Ok(((addr / b) % n_ports as u64) as usize)
}

/// Routes split pieces to `n_ports` downstream ports, preserving order per
/// port.
pub fn distribute(
    pieces: &[TransferDescriptor1D],
    n_ports: usize,
    boundary: Boundary,
    side: Side,
    policy: DistPolicy,
) -> Result<Vec<Vec<TransferDescriptor1D>>, MidendError> {
    let n = n_ports.max(1);
    let mut out = vec![Vec::new(); n];
    for (i, piece) in pieces.iter().enumerate() {
        let port = match policy {
            DistPolicy::Address => dist_port(piece, n, boundary, side)?,
            DistPolicy::RoundRobin => i % n,
        };
        out[port].push(*piece);
    }
    Ok(out)
}

/// A binary tree of two-way address distributors with `levels` levels.
/// Level `k` routes on bit `k` of `address / boundary`; leaves are numbered
/// with the root decision as the least significant bit.
pub fn distribute_tree(
    pieces: &[TransferDescriptor1D],
    levels: u32,
    boundary: Boundary,
    side: Side,
) -> Result<Vec<Vec<TransferDescriptor1D>>, MidendError> {
    fn node(
        pieces: Vec<TransferDescriptor1D>,
        level: u32,
        levels: u32,
        b: Boundary,
        side: Side,
    ) -> Result<Vec<Vec<TransferDescriptor1D>>, MidendError> {
        if level == levels {
            return Ok(vec![pieces]);
        }
        let scaled = Boundary(b.bytes() << level);
        let halves = distribute(&pieces, 2, scaled, side, DistPolicy::Address);
        // the scaled boundary may be crossed by a piece that respects `b`;
        // route by the piece's first address in that case
        let [lo, hi] = match halves {
            Ok(mut h) => [std::mem::take(&mut h[0]), std::mem::take(&mut h[1])],
            Err(_) => {
                let (mut lo, mut hi) = (Vec::new(), Vec::new());
                for p in pieces {
                    if (p.addr(side) / scaled.bytes()).is_multiple_of(2) {
                        lo.push(p);
                    } else {
                        hi.push(p);
                    }
                }
                [lo, hi]
            }
        };
        let lo = node(lo, level + 1, levels, b, side)?;
        let hi = node(hi, level + 1, levels, b, side)?;
        // interleave so the root bit becomes the leaf index LSB
        let mut out = Vec::with_capacity(lo.len() * 2);
        for (a, c) in lo.into_iter().zip(hi) {
            out.push(a);
            out.push(c);
        }
        Ok(out)
    }
    for p in pieces {
        dist_port(p, 1, boundary, side)?;
    }
    node(pieces.to_vec(), 0, levels, boundary, side)
}

/// Configuration of the real-time periodic launcher.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RtConfig {
    pub shape: NdTransferDescriptor,
    pub period: u64,
    /// `None` launches forever.
    #[serde(default)]
    pub num_launches: Option<u64>,
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Cycle of the first periodic launch.
    #[serde(default)]
    pub start: u64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RtSource {
    Periodic { index: u64 },
    Bypass { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RtEvent {
    pub cycle: u64,
    pub source: RtSource,
    /// Cycles the shared port is held.
    pub occupancy: u64,
}

/// A bypass transfer competing for the shared output port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BypassRequest {
    pub arrival: u64,
    pub occupancy: u64,
}

/// Schedules periodic launches and bypass traffic on one shared port.
///
/// Periodic launches win at their due cycle (and ties); a launch whose due
/// cycle falls while the port is held is delayed, never skipped. Bypass
/// requests are served in arrival order. Unbounded launch counts stop at
/// `horizon`.
pub fn rt_schedule(
    cfg: &RtConfig,
    bypass: &[BypassRequest],
    launch_occupancy: u64,
    horizon: u64,
) -> Vec<RtEvent> {
    let mut order: Vec<usize> = (0..bypass.len()).collect();
    order.sort_by_key(|&i| bypass[i].arrival);
    let total_launches = if cfg.enabled {
        cfg.num_launches.unwrap_or(u64::MAX)
    } else {
        0
    };
    let period = cfg.period.max(1);
    let due = |k: u64| cfg.start.saturating_add(k.saturating_mul(period));

    let mut events = Vec::new();
    let mut port_free = 0u64;
    let (mut k, mut next_bypass) = (0u64, 0usize);
    loop {
        let periodic_pending = k < total_launches && due(k) <= horizon;
        let bypass_pending = next_bypass < order.len();
        if !periodic_pending && !bypass_pending {
            break;
        }
        let t_periodic = if periodic_pending { due(k).max(port_free) } else { u64::MAX };
        let t_bypass = if bypass_pending {
            bypass[order[next_bypass]].arrival.max(port_free)
        } else {
            u64::MAX
        };
        let (cycle, source, occupancy) = if t_periodic <= t_bypass {
            k += 1;
            (t_periodic, RtSource::Periodic { index: k - 1 }, launch_occupancy)
        } else {
            let i = order[next_bypass];
            next_bypass += 1;
            (t_bypass, RtSource::Bypass { index: i }, bypass[i].occupancy)
        };
        port_free = cycle + occupancy.max(1);
        events.push(RtEvent { cycle, source, occupancy });
    }
    events
}

fn default_ports() -> u32 {
    2
}

fn default_side() -> Side {
    Side::Write
}

/// One stage of a configured mid-end chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MidendSpec {
    TensorNd {
        /// Forward the first 1D transfer in the arrival cycle.
        #[serde(default)]
        zero_latency: bool,
    },
    #[serde(rename = "tensor_2d")]
    Tensor2d,
    MpSplit {
        boundary: Boundary,
        #[serde(default = "default_side")]
        side: Side,
    },
    /// Distribution over `n_ports` back-ends, modeled as a tree of two-way
    /// distributors (one cycle per tree level).
    MpDist {
        #[serde(default = "default_ports")]
        n_ports: u32,
        #[serde(default)]
        policy: DistPolicy,
        /// Defaults to the preceding `mp_split` boundary.
        #[serde(default)]
        boundary: Option<Boundary>,
        #[serde(default)]
        side: Option<Side>,
    },
    #[serde(rename = "rt_3d")]
    Rt3d(RtConfig),
}

impl MidendSpec {
    /// Cycles this stage adds to the launch path.
    pub fn latency(&self) -> u64 {
        match self {
            MidendSpec::TensorNd { zero_latency: true } => 0,
            MidendSpec::MpDist { n_ports, .. } => {
                u64::from(n_ports.next_power_of_two().trailing_zeros()).max(1)
            }
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MidendSpec::TensorNd { .. } => "tensor_nd",
            MidendSpec::Tensor2d => "tensor_2d",
            MidendSpec::MpSplit { .. } => "mp_split",
            MidendSpec::MpDist { .. } => "mp_dist",
            MidendSpec::Rt3d(_) => "rt_3d",
        }
    }
}

/// Total latency a chain adds between front-end and back-end.
pub fn chain_latency(chain: &[MidendSpec]) -> u64 {
    chain.iter().map(MidendSpec::latency).sum()
}

/// A transfer handed from the front-end to the first mid-end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Launch {
    pub id: u64,
    pub cycle: u64,
    pub desc: NdTransferDescriptor,
}

/// A 1D transfer arriving at a back-end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RoutedTransfer {
    pub launch_id: u64,
    pub cycle: u64,
    pub backend: usize,
    pub desc: TransferDescriptor1D,
}

#[derive(Debug, Clone)]
struct Timed {
    cycle: u64,
    launch_id: u64,
    backend: usize,
    desc: NdTransferDescriptor,
}

/// Output of a chain run: routed 1D transfers plus any launches the chain
/// created itself (periodic real-time launches).
#[derive(Debug, Clone, Default)]
pub struct ChainOutput {
    pub transfers: Vec<RoutedTransfer>,
    pub generated: Vec<Launch>,
}

/// A validated, ordered mid-end chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MidendChain {
    stages: Vec<MidendSpec>,
    aw: u32,
}

impl MidendChain {
    pub fn new(stages: Vec<MidendSpec>, aw: u32) -> Result<Self, MidendError> {
        let mut last_split = None;
        let mut dists = 0;
        let mut resolved = Vec::with_capacity(stages.len());
        for s in stages {
            let s = match s {
                MidendSpec::MpSplit { boundary, side } => {
                    last_split = Some((boundary, side));
                    s
                }
                MidendSpec::MpDist { n_ports, policy, boundary, side } => {
                    dists += 1;
                    if n_ports == 0 {
                        return Err(MidendError::InvalidChain("mp_dist needs at least one port".into()));
                    }
                    let (b, sd) = match (boundary, last_split) {
                        (Some(b), _) => (b, side.unwrap_or(Side::Write)),
                        (None, Some((b, sd))) => (b, side.unwrap_or(sd)),
                        (None, None) if policy == DistPolicy::RoundRobin => {
                            (Boundary(1), side.unwrap_or(Side::Write))
                        }
                        (None, None) => {
                            return Err(MidendError::InvalidChain(
                                "mp_dist needs a boundary or a preceding mp_split".into(),
                            ))
                        }
                    };
                    MidendSpec::MpDist { n_ports, policy, boundary: Some(b), side: Some(sd) }
                }
                MidendSpec::Rt3d(ref rt) if rt.enabled && rt.num_launches.is_none() => {
                    return Err(MidendError::InvalidChain(
                        "rt_3d in a simulation needs a finite num_launches".into(),
                    ))
                }
                other => other,
            };
            resolved.push(s);
        }
        if dists > 1 {
            return Err(MidendError::InvalidChain("at most one mp_dist stage".into()));
        }
        Ok(MidendChain { stages: resolved, aw })
    }

    pub fn stages(&self) -> &[MidendSpec] {
        &self.stages
    }

    pub fn latency(&self) -> u64 {
        chain_latency(&self.stages)
    }

    /// Number of back-ends the chain feeds.
    pub fn backends(&self) -> usize {
        self.stages
            .iter()
            .find_map(|s| match s {
                MidendSpec::MpDist { n_ports, .. } => Some(*n_ports as usize),
                _ => None,
            })
            .unwrap_or(1)
    }

    /// Pushes timed launches through every stage. Launch ids for generated
    /// launches continue after the largest input id.
    pub fn run(&self, launches: &[Launch]) -> Result<ChainOutput, MidendError> {
        let mut next_id = launches.iter().map(|l| l.id).max().unwrap_or(0) + 1;
        let mut items: Vec<Timed> = launches
            .iter()
            .map(|l| Timed { cycle: l.cycle, launch_id: l.id, backend: 0, desc: l.desc.clone() })
            .collect();
        items.sort_by_key(|t| t.cycle);
        let mut generated = Vec::new();

        for stage in &self.stages {
            let lat = stage.latency();
            let mut out = Vec::with_capacity(items.len());
            let mut free = 0u64;
            let mut emit = |out: &mut Vec<Timed>, at: u64, t: Timed| {
                let cycle = (at + lat).max(free);
                free = cycle + 1;
                out.push(Timed { cycle, ..t });
            };
            match stage {
                MidendSpec::TensorNd { .. } | MidendSpec::Tensor2d => {
                    for it in items {
                        if matches!(stage, MidendSpec::Tensor2d) && it.desc.dims.len() > 1 {
                            return Err(MidendError::InvalidChain(
                                "tensor_2d accepts at most one outer dimension".into(),
                            ));
                        }
                        for d in NdExpansion::new(&it.desc, self.aw)? {
                            emit(&mut out, it.cycle, Timed { desc: d.into(), ..it.clone() });
                        }
                    }
                }
                MidendSpec::MpSplit { boundary, side } => {
                    for it in items {
                        let flat = flat(&it.desc)?;
                        if flat.length == 0 {
                            emit(&mut out, it.cycle, it);
                            continue;
                        }
                        for p in split_at_boundary(&flat, *boundary, *side) {
                            emit(&mut out, it.cycle, Timed { desc: p.into(), ..it.clone() });
                        }
                    }
                }
                MidendSpec::MpDist { n_ports, policy, boundary, side } => {
                    let b = boundary.expect("resolved in new");
                    let sd = side.expect("resolved in new");
                    for (i, it) in items.into_iter().enumerate() {
                        let flat = flat(&it.desc)?;
                        let backend = match policy {
                            DistPolicy::Address => dist_port(&flat, *n_ports as usize, b, sd)?,
                            DistPolicy::RoundRobin => i % *n_ports as usize,
                        };
                        emit(&mut out, it.cycle, Timed { backend, ..it });
                    }
                }
                MidendSpec::Rt3d(rt) => {
                    let bypass: Vec<BypassRequest> = items
                        .iter()
                        .map(|t| BypassRequest { arrival: t.cycle, occupancy: 1 })
                        .collect();
                    // launch count is finite here, checked in `new`
                    for ev in rt_schedule(rt, &bypass, 1, u64::MAX) {
                        let t = match ev.source {
                            RtSource::Bypass { index } => items[index].clone(),
                            RtSource::Periodic { .. } => {
                                let id = next_id;
                                next_id += 1;
                                generated.push(Launch { id, cycle: ev.cycle, desc: rt.shape.clone() });
                                Timed { cycle: ev.cycle, launch_id: id, backend: 0, desc: rt.shape.clone() }
                            }
                        };
                        emit(&mut out, ev.cycle, t);
                    }
                }
            }
            items = out;
        }

        let mut transfers = Vec::with_capacity(items.len());
        for it in items {
            transfers.push(RoutedTransfer {
                launch_id: it.launch_id,
                cycle: it.cycle,
                backend: it.backend,
                desc: flat(&it.desc)?,
            });
        }
        Ok(ChainOutput { transfers, generated })
    }
}

fn flat(d: &NdTransferDescriptor) -> Result<TransferDescriptor1D, MidendError> {
    if d.dims.iter().all(|dim| dim.reps == 1) {
        Ok(d.base)
    } else {
        Err(MidendError::NdWithoutTensorMidend)
    }
}
