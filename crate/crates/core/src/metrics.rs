// SPDX-License-Identifier: Apache-2.0

//! Simulation reports, utilization, trace and sweep CSV output.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memsys::BusErrorKind;
use crate::types::{Addr, Side, TransferDescriptor1D};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no request was issued, the active window is empty")]
    EmptyWindow,
    #[error("unknown port `{0}`")]
    UnknownPort(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Launch,
    Desc,
    Ar,
    R,
    Aw,
    W,
    B,
    Done,
    Error,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Launch => "launch",
            TraceKind::Desc => "desc",
            TraceKind::Ar => "ar",
            TraceKind::R => "r",
            TraceKind::Aw => "aw",
            TraceKind::W => "w",
            TraceKind::B => "b",
            TraceKind::Done => "done",
            TraceKind::Error => "error",
        }
    }
}

/// One trace line. `unit` is `fe`, `me` or `be<N>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub cycle: u64,
    pub unit: String,
    pub event: TraceKind,
    pub addr: Addr,
    pub length: u64,
    pub port: String,
}

pub const TRACE_HEADER: &str = "cycle,unit,event,address,length,port";

pub fn trace_csv(events: &[TraceEvent]) -> String {
    let mut s = String::with_capacity(32 * (events.len() + 1));
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for e in events {
        let _ = writeln!(
            s,
            "{},{},{},{:#x},{},{}",
            e.cycle,
            e.unit,
            e.event.as_str(),
            e.addr,
            e.length,
            e.port
        );
    }
    s
}

/// Beat and byte counters of one manager port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PortCounters {
    pub read_requests: u64,
    pub write_requests: u64,
    pub read_beats: u64,
    pub write_beats: u64,
    pub read_bytes: u64,
    pub write_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortReport {
    /// `None` for front-end ports.
    pub backend: Option<usize>,
    pub name: String,
    #[serde(flatten)]
    pub counters: PortCounters,
    pub utilization: f64,
}

/// Outcome of one 1D transfer executed by a back-end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransferRecord {
    pub launch_id: u64,
    pub backend: usize,
    pub desc: TransferDescriptor1D,
    pub arrival: u64,
    pub accepted: u64,
    pub first_read: Option<u64>,
    pub completed: Option<u64>,
    pub failed: bool,
    pub intra_port: bool,
    pub read_bursts: u32,
    pub write_bursts: u32,
}

/// Outcome of one front-end launch (possibly many 1D transfers).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LaunchRecord {
    pub id: u64,
    pub cycle: u64,
    pub transfers: u32,
    pub bytes: u64,
    pub first_read: Option<u64>,
    /// First read request minus launch cycle.
    pub latency: Option<u64>,
    pub completed: Option<u64>,
    pub failed: bool,
}

/// A destination range whose content is undefined after an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SkippedRange {
    pub launch_id: u64,
    pub side: Side,
    pub dst_addr: Addr,
    pub length: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ErrorReport {
    pub launch_id: u64,
    pub backend: usize,
    pub side: Side,
    /// Base address of the offending legalized burst.
    pub addr: Addr,
    pub seq: u32,
    pub cause: BusErrorKind,
    pub cycle: u64,
    pub awaiting_action: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub total_cycles: u64,
    /// First request issue and last response on the data ports.
    pub window: Option<(u64, u64)>,
    pub bus_bytes: u64,
    pub backends: usize,
    pub payload_bytes: u64,
    pub utilization: f64,
    pub ports: Vec<PortReport>,
    pub transfers: Vec<TransferRecord>,
    pub launches: Vec<LaunchRecord>,
    pub skipped: Vec<SkippedRange>,
    pub errors: Vec<ErrorReport>,
    pub failures: u64,
    /// Front-end status register: largest id with all ids at or below it complete.
    pub last_completed_id: u64,
}

pub fn window_cycles(window: Option<(u64, u64)>) -> u64 {
    window.map_or(0, |(a, b)| b - a + 1)
}

/// `payload / (window * bus_bytes * lanes)`; zero for an empty window.
pub fn utilization_of(payload: u64, window: Option<(u64, u64)>, bus_bytes: u64, lanes: usize) -> f64 {
    let cycles = window_cycles(window);
    if cycles == 0 {
        return 0.0;
    }
    payload as f64 / (cycles as f64 * bus_bytes as f64 * lanes.max(1) as f64)
}

impl SimReport {
    /// Utilization of one named data port (summed over back-ends), measured
    /// as the busier of its two channels over the active window.
    pub fn utilization(&self, port: &str) -> Result<f64, MetricsError> {
        if self.window.is_none() {
            return Err(MetricsError::EmptyWindow);
        }
        let mut found = false;
        let mut total = PortCounters::default();
        for p in self.ports.iter().filter(|p| p.name == port && p.backend.is_some()) {
            found = true;
            total.read_bytes += p.counters.read_bytes;
            total.write_bytes += p.counters.write_bytes;
        }
        if !found {
            return Err(MetricsError::UnknownPort(port.to_string()));
        }
        let lanes = self.ports.iter().filter(|p| p.name == port && p.backend.is_some()).count();
        Ok(utilization_of(
            total.read_bytes.max(total.write_bytes),
            self.window,
            self.bus_bytes,
            lanes,
        ))
    }

    pub fn total_beats(&self, side: Side) -> u64 {
        self.ports
            .iter()
            .filter(|p| p.backend.is_some())
            .map(|p| match side {
                Side::Read => p.counters.read_beats,
                Side::Write => p.counters.write_beats,
            })
            .sum()
    }

    /// Latency of the earliest launch that issued a read.
    pub fn launch_latency(&self) -> Option<u64> {
        self.launches.iter().filter(|l| l.latency.is_some()).min_by_key(|l| (l.cycle, l.id))?.latency
    }

    /// Largest launch latency, including queueing behind earlier launches.
    pub fn max_launch_latency(&self) -> Option<u64> {
        self.launches.iter().filter_map(|l| l.latency).max()
    }
}

/// Recomputes overall utilization from a trace alone.
pub fn utilization_from_trace(events: &[TraceEvent], bus_bytes: u64, lanes: usize) -> f64 {
    let mut first = None::<u64>;
    let mut last = None::<u64>;
    let mut payload = 0;
    for e in events.iter().filter(|e| e.unit.starts_with("be")) {
        match e.event {
            TraceKind::Ar | TraceKind::Aw => {
                first = Some(first.map_or(e.cycle, |f| f.min(e.cycle)));
            }
            TraceKind::R | TraceKind::B => {
                last = Some(last.map_or(e.cycle, |l| l.max(e.cycle)));
            }
            TraceKind::Done => payload += e.length,
            _ => {}
        }
    }
    let window = first.zip(last);
    utilization_of(payload, window, bus_bytes, lanes)
}

/// One row of a parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub config_id: String,
    pub dw: u32,
    pub aw: u32,
    pub nax: u32,
    pub mem_preset: String,
    pub piece_bytes: u64,
    pub total_bytes: u64,
    pub cycles: u64,
    pub util: f64,
    pub launch_latency: Option<u64>,
    pub failures: u64,
}

pub const SWEEP_HEADER: &str =
    "config_id,dw,aw,nax,mem_preset,piece_bytes,total_bytes,cycles,util,launch_latency,failures";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::new();
    s.push_str(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{:.6},{},{}",
            r.config_id,
            r.dw,
            r.aw,
            r.nax,
            r.mem_preset,
            r.piece_bytes,
            r.total_bytes,
            r.cycles,
            r.util,
            r.launch_latency.map_or(String::new(), |l| l.to_string()),
            r.failures
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(cycle: u64, event: TraceKind, length: u64) -> TraceEvent {
        TraceEvent { cycle, unit: "be0".into(), event, addr: 0, length, port: "axi".into() }
    }

    #[test]
    fn full_window_is_one() {
        assert_eq!(utilization_of(4096, Some((0, 1023)), 4, 1), 1.0);
        assert_eq!(utilization_of(0, None, 4, 1), 0.0);
    }

    #[test]
    fn ceiling_for_small_transfers() {
        // one byte per beat on a 4-byte bus
        let u = utilization_of(1000, Some((0, 999)), 4, 1);
        assert!(u <= 0.25);
    }

    #[test]
    fn trace_recompute() {
        let t = vec![
            ev(2, TraceKind::Ar, 8),
            ev(5, TraceKind::R, 4),
            ev(6, TraceKind::R, 4),
            ev(5, TraceKind::Aw, 8),
            ev(10, TraceKind::B, 8),
            ev(10, TraceKind::Done, 8),
        ];
        assert_eq!(utilization_from_trace(&t, 4, 1), 8.0 / (9.0 * 4.0));
        let csv = trace_csv(&t);
        assert!(csv.starts_with(TRACE_HEADER));
        assert_eq!(csv.lines().nth(1).unwrap(), "2,be0,ar,0x0,8,axi");
    }

    #[test]
    fn sweep_csv_shape() {
        assert_eq!(sweep_csv(&[]), format!("{SWEEP_HEADER}\n"));
        let row = SweepRow {
            config_id: "a".into(),
            dw: 32,
            aw: 32,
            nax: 4,
            mem_preset: "sram".into(),
            piece_bytes: 16,
            total_bytes: 1024,
            cycles: 300,
            util: 0.5,
            launch_latency: Some(2),
            failures: 0,
        };
        let csv = sweep_csv(&[row.clone(), row]);
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv.lines().nth(1).unwrap(), "a,32,32,4,sram,16,1024,300,0.500000,2,0");
    }
}
