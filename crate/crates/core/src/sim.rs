// SPDX-License-Identifier: Apache-2.0

//! Top-level simulation: front-end launches, mid-end routing, back-end
//! stepping and report assembly.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::{FrontendConfig, SimConfig, SimConfigError};
use crate::engine::{Backend, ErrorMode, NoPendingError, PortBinding, SimError};
use crate::frontend::{desc_launches, direct_launches, reg_launches, write_chain, FrontendRun};
use crate::memsys::{EndpointTiming, Memory};
use crate::metrics::{
    utilization_of, ErrorReport, LaunchRecord, PortReport, SimReport, SweepRow, TraceEvent,
};
use crate::midend::Launch;
use crate::protocol::ProtocolId;
use crate::types::{ErrorAction, TransferDescriptor1D};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] SimConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cycle limit {0} reached")]
    CycleLimit(u64),
}

impl RunError {
    /// True for protocol contract violations by the simulated managers.
    pub fn is_contract_violation(&self) -> bool {
        matches!(self, RunError::Sim(SimError::ContractViolation { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub trace: bool,
    pub error_mode: ErrorMode,
    pub max_cycles: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { trace: true, error_mode: ErrorMode::Auto, max_cycles: None }
    }
}

/// Memory contents after a run, keyed by the port name of each entry.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub report: SimReport,
    pub trace: Vec<TraceEvent>,
    pub memories: BTreeMap<String, Memory>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RunState {
    Done,
    AwaitingError,
}

pub struct Simulation {
    cfg: SimConfig,
    opts: RunOptions,
    backends: Vec<Backend>,
    mems: Vec<Memory>,
    mem_names: Vec<String>,
    fe: FrontendRun,
    launches: Vec<Launch>,
    now: u64,
    last_progress: u64,
    stall_limit: u64,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation").field("now", &self.now).field("backends", &self.backends).finish()
    }
}

/// Deterministic initial memory contents for entry `idx`.
pub fn fill_memory(mem: &mut Memory, seed: u64, idx: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (idx as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.fill_bytes(mem.bytes_mut());
}

impl Simulation {
    pub fn new(cfg: &SimConfig, seed: u64, opts: RunOptions) -> Result<Self, RunError> {
        let chain = cfg.check()?;
        let mut cfg = cfg.clone();
        cfg.normalize();
        let engine = &cfg.engine;

        let mut mems = Vec::with_capacity(cfg.memory.len());
        let mut timings = Vec::with_capacity(cfg.memory.len());
        for (i, m) in cfg.memory.iter().enumerate() {
            let size = usize::try_from(m.size)
                .map_err(|_| SimConfigError::Workload(format!("memory `{}` too large", m.port)))?;
            let mut mem = Memory::new(m.base, size);
            fill_memory(&mut mem, seed, i);
            mems.push(mem);
            timings.push(m.timing()?);
        }
        let mem_names: Vec<String> = cfg.memory.iter().map(|m| m.port.clone()).collect();
        let index_of = |name: &str| mem_names.iter().position(|n| n == name);

        let transfers = cfg.workload.transfers()?;
        let fe = match &cfg.frontend {
            FrontendConfig::Direct { start } => direct_launches(&transfers, *start, 1),
            FrontendConfig::Inst { start } => direct_launches(&transfers, *start, 3),
            FrontendConfig::Reg { start } => reg_launches(&transfers, *start).map_err(SimConfigError::from)?,
            FrontendConfig::Desc { port, head, start } => {
                let i = index_of(port).expect("checked");
                let head = head.unwrap_or(mems[i].base());
                let flat: Vec<TransferDescriptor1D> = transfers.iter().map(|t| t.base).collect();
                write_chain(&mut mems[i], head, &flat).map_err(SimConfigError::from)?;
                desc_launches(&mems[i], head, port, timings[i], engine.dw, *start)
                    .map_err(SimConfigError::from)?
            }
        };
        let routed = chain.run(&fe.launches).map_err(SimConfigError::from)?;
        let mut launches = fe.launches.clone();
        launches.extend(routed.generated);

        let max_latency = timings.iter().map(|t| t.latency).max().unwrap_or(1);
        let mut backends: Vec<Backend> = (0..chain.backends())
            .map(|b| {
                let bindings = engine
                    .ports
                    .iter()
                    .map(|p| {
                        let m = index_of(&p.name);
                        PortBinding {
                            name: p.name.clone(),
                            protocol: p.protocol,
                            direction: p.direction,
                            memory: m.filter(|_| p.protocol != ProtocolId::Init),
                            timing: m.map_or(
                                EndpointTiming { latency: 1, max_outstanding: engine.nax_read.max(1) },
                                |i| timings[i],
                            ),
                            errors: m.map_or_else(Vec::new, |i| cfg.memory[i].errors.clone()),
                        }
                    })
                    .collect();
                Backend::new(b, engine.clone(), bindings, opts.error_mode, opts.trace)
            })
            .collect();
        for t in routed.transfers {
            backends[t.backend].enqueue(t);
        }
        let start = launches.iter().map(|l| l.cycle).min().unwrap_or(0);
        Ok(Simulation {
            cfg,
            opts,
            backends,
            mems,
            mem_names,
            fe,
            launches,
            now: start,
            last_progress: start,
            stall_limit: 10 * max_latency.max(16),
        })
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn backends(&self) -> &[Backend] {
        &self.backends
    }

    pub fn is_done(&self) -> bool {
        self.backends.iter().all(Backend::is_idle)
    }

    /// Oldest error awaiting a decision (manual error mode only).
    pub fn pending_error(&self) -> Option<ErrorReport> {
        self.backends.iter().find_map(|b| b.pending_error().copied())
    }

    pub fn handle_error(&mut self, action: ErrorAction) -> Result<(), NoPendingError> {
        let b = self.backends.iter().position(|b| b.pending_error().is_some()).ok_or(NoPendingError)?;
        let now = self.now;
        self.backends[b].handle_error(action, now)
    }

    pub fn memory(&self, port: &str) -> Option<&Memory> {
        self.mem_names.iter().position(|n| n == port).map(|i| &self.mems[i])
    }

    /// Simulates the current cycle, then advances time to the next cycle
    /// at which something can happen.
    pub fn step(&mut self) -> Result<(), RunError> {
        let now = self.now;
        let mut progress = false;
        for b in &mut self.backends {
            progress |= b.step(now, &mut self.mems)?;
        }
        let busy = self.backends.iter().any(Backend::busy);
        if progress || !busy {
            self.last_progress = now;
        } else if now - self.last_progress > self.stall_limit {
            return Err(SimError::Deadlock {
                since: self.last_progress,
                now,
                detail: format!("{:?}", self.backends),
            }
            .into());
        }
        if progress {
            self.now += 1;
            return Ok(());
        }
        let next = self.backends.iter().filter_map(|b| b.next_event(now)).min();
        match next {
            Some(t) => self.now = t,
            None if self.is_done() || self.pending_error().is_some() => self.now += 1,
            None => {
                return Err(SimError::Deadlock {
                    since: self.last_progress,
                    now,
                    detail: format!("no pending event: {:?}", self.backends),
                }
                .into())
            }
        }
        Ok(())
    }

    /// Runs until every transfer finished or an error awaits a decision.
    pub fn run(&mut self) -> Result<RunState, RunError> {
        loop {
            if self.pending_error().is_some() {
                return Ok(RunState::AwaitingError);
            }
            if self.is_done() {
                return Ok(RunState::Done);
            }
            if let Some(limit) = self.opts.max_cycles {
                if self.now > limit {
                    return Err(RunError::CycleLimit(limit));
                }
            }
            self.step()?;
        }
    }

    pub fn report(&self) -> SimReport {
        let bb = self.cfg.engine.bus_bytes();
        let lanes = self.backends.len();
        let window = self.backends.iter().filter_map(Backend::window).reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)));
        let mut transfers: Vec<_> = self.backends.iter().flat_map(|b| b.records().cloned()).collect();
        transfers.sort_by_key(|t| (t.arrival, t.backend));
        let payload: u64 = transfers.iter().filter(|t| t.completed.is_some() && !t.failed).map(|t| t.desc.length).sum();

        let mut ports = Vec::new();
        for (i, b) in self.backends.iter().enumerate() {
            for (name, c) in b.port_counters() {
                let u = utilization_of(c.read_bytes.max(c.write_bytes), window, bb, 1);
                ports.push(PortReport { backend: Some(i), name, counters: c, utilization: u });
            }
        }
        if let Some((name, c)) = &self.fe.fetch_port {
            let u = utilization_of(c.read_bytes, window, bb, 1);
            ports.push(PortReport { backend: None, name: name.clone(), counters: *c, utilization: u });
        }

        let mut launches: Vec<LaunchRecord> = self
            .launches
            .iter()
            .map(|l| LaunchRecord {
                id: l.id,
                cycle: l.cycle,
                transfers: 0,
                bytes: 0,
                first_read: None,
                latency: None,
                completed: Some(l.cycle),
                failed: false,
            })
            .collect();
        launches.sort_by_key(|l| l.id);
        for t in &transfers {
            let Ok(i) = launches.binary_search_by_key(&t.launch_id, |l| l.id) else { continue };
            let l = &mut launches[i];
            l.transfers += 1;
            l.bytes += t.desc.length;
            l.failed |= t.failed;
            if let Some(fr) = t.first_read {
                l.first_read = Some(l.first_read.map_or(fr, |x| x.min(fr)));
            }
            l.completed = l.completed.zip(t.completed).map(|(a, b)| a.max(b));
        }
        for l in &mut launches {
            l.latency = l.first_read.map(|f| f - l.cycle);
        }
        let last_completed_id = launches
            .iter()
            .take_while(|l| l.completed.is_some())
            .last()
            .map_or(0, |l| l.id);

        let total_cycles = transfers
            .iter()
            .filter_map(|t| t.completed)
            .chain(window.map(|w| w.1))
            .max()
            .map_or(0, |c| c + 1);
        SimReport {
            total_cycles,
            window,
            bus_bytes: bb,
            backends: lanes,
            payload_bytes: payload,
            utilization: utilization_of(payload, window, bb, lanes),
            ports,
            failures: transfers.iter().filter(|t| t.failed).count() as u64,
            transfers,
            launches,
            skipped: self.backends.iter().flat_map(|b| b.skipped().iter().copied()).collect(),
            errors: self.backends.iter().flat_map(|b| b.errors().iter().copied()).collect(),
            last_completed_id,
        }
    }

    pub fn finish(mut self) -> SimOutput {
        let report = self.report();
        let mut trace = std::mem::take(&mut self.fe.trace);
        for b in &mut self.backends {
            trace.extend(b.take_trace());
        }
        trace.sort_by_key(|e| e.cycle);
        let memories = self.mem_names.into_iter().zip(self.mems).collect();
        SimOutput { report, trace, memories }
    }
}

/// Builds, runs to completion and collects one simulation.
pub fn simulate(cfg: &SimConfig, seed: u64, opts: RunOptions) -> Result<SimOutput, RunError> {
    let mut sim = Simulation::new(cfg, seed, RunOptions { error_mode: ErrorMode::Auto, ..opts })?;
    sim.run()?;
    Ok(sim.finish())
}

/// Sweep row for a finished run of `cfg`.
pub fn sweep_row(config_id: &str, cfg: &SimConfig, report: &SimReport) -> SweepRow {
    SweepRow {
        config_id: config_id.to_string(),
        dw: cfg.engine.dw,
        aw: cfg.engine.aw,
        nax: cfg.engine.nax_read,
        mem_preset: cfg.memory.first().map_or("none", |m| m.label()).to_string(),
        piece_bytes: cfg.workload.piece_bytes(),
        total_bytes: cfg.workload.total_bytes(),
        cycles: report.total_cycles,
        util: report.utilization,
        launch_latency: report.launch_latency(),
        failures: report.failures,
    }
}
