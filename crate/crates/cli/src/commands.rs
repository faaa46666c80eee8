// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};
use idma_core::costmodel::{estimate_area, estimate_timing, latency_model};
use idma_core::engine::backend_latency;
use idma_core::metrics::{sweep_csv, trace_csv};
use idma_core::midend::chain_latency;
use idma_core::presets::{load_preset, PRESETS};
use idma_core::sim::sweep_row;
use idma_core::{
    legalize as legalize_transfer, simulate as run_sim, BackendOptions, Direction, EngineConfig, LegalBurst,
    PortConfig, ProtocolId, RunError, RunOptions, SimConfig, TransferDescriptor1D,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::{Format, Model, SideFilter};

pub const THREADS_ENV: &str = "IDMA_SIM_THREADS";

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let code = if e.is_contract_violation() { 2 } else { 1 };
        Failure { code, error: e.into() }
    }
}

type CmdResult = Result<(), Failure>;

/// Accepts decimal or `0x`-prefixed hexadecimal.
pub fn parse_u64(s: &str) -> Result<u64, String> {
    let t = s.trim().replace('_', "");
    let r = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16),
        None => t.parse(),
    };
    r.map_err(|e| format!("`{s}`: {e}"))
}

/// A preset name, or a path to a JSON file.
fn load_config(spec: &str) -> anyhow::Result<SimConfig> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {spec}"))?;
        return SimConfig::from_json(&text).with_context(|| format!("parsing {spec}"));
    }
    match load_preset(spec) {
        Some(cfg) => Ok(cfg?),
        None => Err(anyhow!("`{spec}` is neither a file nor a preset")),
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn config_id(cfg: &SimConfig) -> String {
    cfg.name.clone().unwrap_or_else(|| "config".into())
}

pub fn simulate(config: &str, out: Option<&Path>, trace: Option<&Path>, seed: u64, format: Format) -> CmdResult {
    let cfg = load_config(config)?;
    let opts = RunOptions { trace: trace.is_some(), ..RunOptions::default() };
    let result = run_sim(&cfg, seed, opts)?;
    if let Some(p) = trace {
        emit(Some(p), &trace_csv(&result.trace))?;
    }
    let text = match format {
        Format::Csv => sweep_csv(&[sweep_row(&config_id(&cfg), &cfg, &result.report)]),
        Format::Json => json(&result.report),
    };
    Ok(emit(out, &text)?)
}

fn worker_pool() -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| anyhow!("{THREADS_ENV}=`{v}` is not a thread count"))?;
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

pub fn sweep(config: &str, param: &str, values: &[String], out: Option<&Path>, seed: u64, format: Format) -> CmdResult {
    let base = load_config(config)?;
    let mut points = Vec::with_capacity(values.len());
    for v in values {
        let mut cfg = base.clone();
        cfg.apply_param(param, v).map_err(anyhow::Error::from)?;
        points.push((format!("{}:{param}={v}", config_id(&base)), cfg));
    }
    let opts = RunOptions { trace: false, ..RunOptions::default() };
    let results: Vec<Result<_, RunError>> = worker_pool()?.install(|| {
        points
            .par_iter()
            .map(|(id, cfg)| run_sim(cfg, seed, opts).map(|o| sweep_row(id, cfg, &o.report)))
            .collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let text = match format {
        Format::Csv => sweep_csv(&rows),
        Format::Json => json(&rows),
    };
    Ok(emit(out, &text)?)
}

pub struct LegalizeRequest {
    pub src: u64,
    pub dst: u64,
    pub len: u64,
    pub proto: String,
    pub dst_proto: Option<String>,
    pub dw: u32,
    pub cap: Option<u64>,
    pub coupled: bool,
    pub side: SideFilter,
}

#[derive(Serialize)]
struct BurstRow {
    side: String,
    seq: u32,
    addr: String,
    len: u64,
}

pub fn legalize(req: &LegalizeRequest, out: Option<&Path>, format: Format) -> CmdResult {
    let sp: ProtocolId = req.proto.parse().map_err(anyhow::Error::from)?;
    let dp: ProtocolId = match &req.dst_proto {
        Some(p) => p.parse().map_err(anyhow::Error::from)?,
        None => sp,
    };
    let mut cfg = EngineConfig::base(1);
    cfg.dw = req.dw;
    cfg.ports = vec![PortConfig::new(sp, Direction::Read), PortConfig::new(dp, Direction::Write)];
    let options = BackendOptions { decouple_rw: !req.coupled, user_burst_cap: req.cap, ..BackendOptions::default() };
    let d = TransferDescriptor1D::new(req.src, req.dst, req.len, sp).with_protocols(sp, dp).with_options(options);
    d.validate(cfg.aw, cfg.dw).map_err(|e| anyhow!("{e}"))?;
    let l = legalize_transfer(&d, &cfg).map_err(|e| anyhow!("{e}"))?;
    let mut bursts: Vec<&LegalBurst> = Vec::new();
    if req.side != SideFilter::Write {
        bursts.extend(&l.read_bursts);
    }
    if req.side != SideFilter::Read {
        bursts.extend(&l.write_bursts);
    }
    let rows: Vec<BurstRow> = bursts
        .iter()
        .map(|b| BurstRow { side: b.side.to_string(), seq: b.seq, addr: format!("{:#x}", b.addr), len: b.length })
        .collect();
    let text = match format {
        Format::Csv => {
            let mut s = String::from("side,seq,addr,len\n");
            for r in &rows {
                s.push_str(&format!("{},{},{},{}\n", r.side, r.seq, r.addr, r.len));
            }
            s
        }
        Format::Json => json(&rows),
    };
    Ok(emit(out, &text)?)
}

#[derive(Serialize)]
struct TimingReport {
    longest_path_ns: f64,
    f_max_ghz: f64,
    coefficients: &'static str,
}

#[derive(Serialize)]
struct LatencyReport {
    backend: u64,
    midends: u64,
    total: u64,
}

pub fn estimate(model: Model, config: &str, out: Option<&Path>, format: Format) -> CmdResult {
    let cfg = load_config(config)?;
    cfg.check().map_err(anyhow::Error::from)?;
    let text = match model {
        Model::Area => {
            let a = estimate_area(&cfg.engine).map_err(anyhow::Error::from)?;
            match format {
                Format::Csv => a.to_csv(),
                Format::Json => json(&a),
            }
        }
        Model::Timing => {
            let t = estimate_timing(&cfg.engine).map_err(anyhow::Error::from)?;
            let r = TimingReport { longest_path_ns: t.longest_path_ns, f_max_ghz: t.f_max_ghz, coefficients: "synthetic" };
            match format {
                Format::Csv => format!(
                    "longest_path_ns,f_max_ghz,coefficients\n{:.4},{:.4},{}\n",
                    r.longest_path_ns, r.f_max_ghz, r.coefficients
                ),
                Format::Json => json(&r),
            }
        }
        Model::Latency => {
            let r = LatencyReport {
                backend: backend_latency(&cfg.engine),
                midends: chain_latency(&cfg.midends),
                total: latency_model(&cfg.engine, &cfg.midends),
            };
            match format {
                Format::Csv => format!("backend,midends,total\n{},{},{}\n", r.backend, r.midends, r.total),
                Format::Json => json(&r),
            }
        }
    };
    Ok(emit(out, &text)?)
}

pub fn presets(name: Option<&str>) -> CmdResult {
    match name {
        None => {
            let mut s = String::new();
            for (n, _) in PRESETS {
                s.push_str(n);
                s.push('\n');
            }
            Ok(emit(None, &s)?)
        }
        Some(n) => {
            let cfg = load_preset(n).ok_or_else(|| anyhow!("no preset named `{n}`"))?;
            Ok(emit(None, &format!("{}\n", cfg.map_err(anyhow::Error::from)?.to_json()))?)
        }
    }
}
