// SPDX-License-Identifier: Apache-2.0

//! JSON simulation configuration: engine, memories, front-end, mid-end
//! chain and workload. Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::FrontendError;
use crate::memsys::{EndpointTiming, ErrorRule, MemPreset, MemsysError};
use crate::midend::{MidendChain, MidendError, MidendSpec};
use crate::protocol::ProtocolId;
use crate::types::{
    validate_config, Addr, BackendOptions, ConfigErrors, EngineConfig, NdTransferDescriptor,
    TransferDescriptor1D,
};

#[derive(Debug, Error)]
pub enum SimConfigError {
    #[error("engine: {0}")]
    Engine(#[from] ConfigErrors),
    #[error("midends: {0}")]
    Midend(#[from] MidendError),
    #[error("frontend: {0}")]
    Frontend(#[from] FrontendError),
    #[error("memory: {0}")]
    Memory(#[from] MemsysError),
    #[error("port `{0}` has no memory entry")]
    UnboundPort(String),
    #[error("memory entry names unknown port `{0}`")]
    UnknownPort(String),
    #[error("port name `{0}` is used twice")]
    DuplicatePort(String),
    #[error("memory `{0}` needs a preset or both latency and max_outstanding")]
    MissingTiming(String),
    #[error("workload: {0}")]
    Workload(String),
    #[error("unknown sweep parameter `{0}`")]
    UnknownParam(String),
    #[error("bad value `{value}` for `{param}`")]
    BadValue { param: String, value: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Endpoint bound to one port name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryConfig {
    pub port: String,
    #[serde(default)]
    pub preset: Option<MemPreset>,
    /// Overrides the preset latency.
    #[serde(default)]
    pub latency: Option<u64>,
    #[serde(default)]
    pub max_outstanding: Option<u32>,
    #[serde(default)]
    pub base: Addr,
    pub size: u64,
    #[serde(default)]
    pub errors: Vec<ErrorRule>,
}

impl MemoryConfig {
    pub fn new(port: &str, preset: MemPreset, size: u64) -> Self {
        MemoryConfig {
            port: port.to_string(),
            preset: Some(preset),
            latency: None,
            max_outstanding: None,
            base: 0,
            size,
            errors: Vec::new(),
        }
    }

    pub fn timing(&self) -> Result<EndpointTiming, SimConfigError> {
        let p = self.preset.map(MemPreset::timing);
        let latency = self.latency.or(p.map(|t| t.latency));
        let max = self.max_outstanding.or(p.map(|t| t.max_outstanding));
        match (latency, max) {
            (Some(l), Some(m)) => Ok(EndpointTiming::new(l, m)?),
            _ => Err(SimConfigError::MissingTiming(self.port.clone())),
        }
    }

    /// Preset name, or `custom` when timing is set explicitly.
    pub fn label(&self) -> &str {
        match (self.preset, self.latency, self.max_outstanding) {
            (Some(p), None, None) => p.as_str(),
            _ => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrontendConfig {
    /// One launch per cycle.
    Direct {
        #[serde(default)]
        start: u64,
    },
    /// Three-instruction launch sequence per transfer.
    Inst {
        #[serde(default)]
        start: u64,
    },
    /// 32-bit register file, one access per cycle.
    Reg {
        #[serde(default)]
        start: u64,
    },
    /// 64-bit descriptor chain fetched over `port`.
    Desc {
        port: String,
        /// Chain head; defaults to the base of the port's memory.
        #[serde(default)]
        head: Option<Addr>,
        #[serde(default)]
        start: u64,
    },
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig::Direct { start: 0 }
    }
}

fn axi() -> ProtocolId {
    ProtocolId::Axi
}

/// A contiguous copy cut into equal pieces; the last piece may be shorter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceWorkload {
    pub src: Addr,
    pub dst: Addr,
    pub total_bytes: u64,
    pub piece_bytes: u64,
    #[serde(default = "axi")]
    pub src_protocol: ProtocolId,
    #[serde(default = "axi")]
    pub dst_protocol: ProtocolId,
    #[serde(default)]
    pub options: BackendOptions,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Workload {
    Pieces(PieceWorkload),
    Transfers { transfers: Vec<NdTransferDescriptor> },
}

impl Workload {
    pub fn transfers(&self) -> Result<Vec<NdTransferDescriptor>, SimConfigError> {
        match self {
            Workload::Transfers { transfers } => Ok(transfers.clone()),
            Workload::Pieces(p) => {
                if p.piece_bytes == 0 {
                    return Err(SimConfigError::Workload("piece_bytes must be at least 1".into()));
                }
                let mut out = Vec::with_capacity(p.total_bytes.div_ceil(p.piece_bytes) as usize);
                let mut off = 0;
                while off < p.total_bytes {
                    let len = p.piece_bytes.min(p.total_bytes - off);
                    let d = TransferDescriptor1D::new(p.src + off, p.dst + off, len, p.src_protocol)
                        .with_protocols(p.src_protocol, p.dst_protocol)
                        .with_options(p.options);
                    out.push(d.into());
                    off += len;
                }
                Ok(out)
            }
        }
    }

    pub fn piece_bytes(&self) -> u64 {
        match self {
            Workload::Pieces(p) => p.piece_bytes,
            Workload::Transfers { .. } => 0,
        }
    }

    pub fn total_bytes(&self) -> u64 {
        match self {
            Workload::Pieces(p) => p.total_bytes,
            Workload::Transfers { transfers } => transfers.iter().map(|t| t.total_bytes()).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub engine: EngineConfig,
    pub memory: Vec<MemoryConfig>,
    #[serde(default)]
    pub frontend: FrontendConfig,
    #[serde(default)]
    pub midends: Vec<MidendSpec>,
    pub workload: Workload,
}

impl SimConfig {
    pub fn from_json(s: &str) -> Result<Self, SimConfigError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Single-memory copy of `total` bytes in `piece`-byte transfers on the
    /// base engine.
    pub fn piece_copy(nax: u32, preset: MemPreset, total: u64, piece: u64) -> Self {
        SimConfig {
            name: None,
            engine: EngineConfig::base(nax),
            memory: vec![MemoryConfig::new("axi", preset, 2 * total)],
            frontend: FrontendConfig::default(),
            midends: Vec::new(),
            workload: Workload::Pieces(PieceWorkload {
                src: 0,
                dst: total,
                total_bytes: total,
                piece_bytes: piece,
                src_protocol: ProtocolId::Axi,
                dst_protocol: ProtocolId::Axi,
                options: BackendOptions::default(),
            }),
        }
    }

    /// Fills empty port names with the protocol identifier.
    pub fn normalize(&mut self) {
        for p in &mut self.engine.ports {
            if p.name.is_empty() {
                p.name = p.protocol.as_str().to_string();
            }
        }
    }

    /// Structural checks beyond the engine's own validation.
    pub fn check(&self) -> Result<MidendChain, SimConfigError> {
        let mut cfg = self.clone();
        cfg.normalize();
        validate_config(cfg.engine.clone())?;
        let mut names = std::collections::HashSet::new();
        for p in &cfg.engine.ports {
            if !names.insert(p.name.as_str()) {
                return Err(SimConfigError::DuplicatePort(p.name.clone()));
            }
            if p.protocol != ProtocolId::Init && !cfg.memory.iter().any(|m| m.port == p.name) {
                return Err(SimConfigError::UnboundPort(p.name.clone()));
            }
        }
        let desc_port = match &cfg.frontend {
            FrontendConfig::Desc { port, .. } => Some(port.as_str()),
            _ => None,
        };
        let mut seen = std::collections::HashSet::new();
        for m in &cfg.memory {
            if !seen.insert(m.port.as_str()) {
                return Err(SimConfigError::DuplicatePort(m.port.clone()));
            }
            if !names.contains(m.port.as_str()) && desc_port != Some(m.port.as_str()) {
                return Err(SimConfigError::UnknownPort(m.port.clone()));
            }
            m.timing()?;
        }
        if let Some(port) = desc_port {
            if !seen.contains(port) {
                return Err(SimConfigError::UnboundPort(port.to_string()));
            }
        }
        let transfers = cfg.workload.transfers()?;
        if let FrontendConfig::Desc { .. } = cfg.frontend {
            if transfers.iter().any(|t| !t.dims.is_empty()) {
                return Err(FrontendError::NotOneDimensional.into());
            }
        }
        if let FrontendConfig::Reg { .. } = cfg.frontend {
            if transfers.iter().any(|t| t.dims.len() > 2) {
                return Err(FrontendError::TooManyDims.into());
            }
        }
        if matches!(cfg.frontend, FrontendConfig::Reg { .. } | FrontendConfig::Desc { .. }) {
            for t in &transfers {
                crate::frontend::check_encodable(&t.base)?;
            }
        }
        for t in &transfers {
            t.base
                .validate(cfg.engine.aw, cfg.engine.dw)
                .map_err(|e| SimConfigError::Workload(e.to_string()))?;
        }
        Ok(MidendChain::new(cfg.midends.clone(), cfg.engine.aw)?)
    }

    /// Applies one sweep parameter.
    pub fn apply_param(&mut self, param: &str, value: &str) -> Result<(), SimConfigError> {
        let bad = || SimConfigError::BadValue { param: param.to_string(), value: value.to_string() };
        let int = || value.trim().parse::<u64>().map_err(|_| bad());
        let small = || u32::try_from(int()?).map_err(|_| bad());
        match param {
            "nax" => {
                let n = small()?;
                self.engine.nax_read = n;
                self.engine.nax_write = n;
            }
            "nax_read" => self.engine.nax_read = small()?,
            "nax_write" => self.engine.nax_write = small()?,
            "dw" => self.engine.dw = small()?,
            "aw" => self.engine.aw = small()?,
            "buffer_depth" => self.engine.buffer_depth = small()?,
            "piece_bytes" | "total_bytes" => {
                let Workload::Pieces(p) = &mut self.workload else {
                    return Err(SimConfigError::Workload(format!("`{param}` needs a pieces workload")));
                };
                if param == "piece_bytes" {
                    p.piece_bytes = int()?;
                } else {
                    p.total_bytes = int()?;
                }
            }
            "latency" => {
                let l = int()?;
                self.memory.iter_mut().for_each(|m| m.latency = Some(l));
            }
            "max_outstanding" => {
                let n = small()?;
                self.memory.iter_mut().for_each(|m| m.max_outstanding = Some(n));
            }
            "mem_preset" => {
                let p: MemPreset = value.trim().parse()?;
                for m in &mut self.memory {
                    m.preset = Some(p);
                    m.latency = None;
                    m.max_outstanding = None;
                }
            }
            _ => return Err(SimConfigError::UnknownParam(param.to_string())),
        }
        Ok(())
    }
}
