// SPDX-License-Identifier: Apache-2.0

//! Domain types exchanged between the front-, mid- and back-end models,
//! plus engine configuration validation.
//!
//! Addresses and lengths are carried as `u64` regardless of the configured
//! address width; the address width only bounds which values are legal.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::ProtocolId;

/// Byte address.
pub type Addr = u64;

/// Which half of the transport layer a burst or error belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Read,
    Write,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Read => "read",
            Side::Write => "write",
        })
    }
}

/// Capability of a protocol port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Read,
    Write,
    ReadWrite,
}

impl Direction {
    pub fn can_read(self) -> bool {
        matches!(self, Direction::Read | Direction::ReadWrite)
    }

    pub fn can_write(self) -> bool {
        matches!(self, Direction::Write | Direction::ReadWrite)
    }
}

/// Resolution applied by the error handler to a failed burst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorAction {
    #[default]
    Continue,
    Abort,
    Replay,
}

/// Byte pattern produced by the `Init` read manager.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitPattern {
    Constant { value: u8 },
    Increment { start: u8 },
    Pseudorandom { seed: u64 },
}

impl Default for InitPattern {
    fn default() -> Self {
        InitPattern::Constant { value: 0 }
    }
}

/// Run-time back-end options carried with every 1D transfer.
///
/// Only `decouple_rw` and the burst caps influence legalization; the
/// error action and init pattern are consumed by the transport layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendOptions {
    /// Legalize the two sides independently. When false both sides are cut
    /// at the same stream offsets.
    pub decouple_rw: bool,
    /// Upper bound on any burst, in bytes. `None` means unlimited.
    pub user_burst_cap: Option<u64>,
    /// Limit source bursts to `2^n` beats.
    pub src_reduce_len: Option<u8>,
    /// Limit destination bursts to `2^n` beats.
    pub dst_reduce_len: Option<u8>,
    pub error_action_default: ErrorAction,
    pub init_pattern: InitPattern,
    /// Index of this transfer's first byte in the init pattern stream.
    /// Mid-ends that split a transfer advance it so pieces continue the
    /// parent's pattern.
    #[serde(skip_serializing_if = "is_zero")]
    pub init_offset: u64,
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

impl Default for BackendOptions {
    fn default() -> Self {
        BackendOptions {
            decouple_rw: true,
            user_burst_cap: None,
            src_reduce_len: None,
            dst_reduce_len: None,
            error_action_default: ErrorAction::Continue,
            init_pattern: InitPattern::default(),
            init_offset: 0,
        }
    }
}

impl BackendOptions {
    /// Effective burst cap in bytes for one side on a `dw`-bit bus.
    pub fn side_cap(&self, side: Side, dw: u32) -> Option<u64> {
        let reduce = match side {
            Side::Read => self.src_reduce_len,
            Side::Write => self.dst_reduce_len,
        };
        let bus_bytes = u64::from(dw / 8).max(1);
        let reduce_cap = reduce.map(|n| (1u64 << n.min(32)) * bus_bytes);
        match (self.user_burst_cap, reduce_cap) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DescriptorError {
    #[error("{side} range {addr:#x}+{length:#x} exceeds the {aw}-bit address space")]
    AddressOutOfRange {
        side: Side,
        addr: Addr,
        length: u64,
        aw: u32,
    },
    #[error("burst cap {cap} is below the bus width of {bus_bytes} bytes")]
    CapBelowBusWidth { cap: u64, bus_bytes: u64 },
}

/// Largest legal end address (exclusive) for an `aw`-bit address space.
pub fn address_limit(aw: u32) -> u128 {
    1u128 << aw.min(64)
}

/// The unit of work a back-end executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferDescriptor1D {
    pub src_addr: Addr,
    pub dst_addr: Addr,
    pub length: u64,
    pub src_protocol: ProtocolId,
    pub dst_protocol: ProtocolId,
    #[serde(default)]
    pub options: BackendOptions,
}

impl TransferDescriptor1D {
    pub fn new(src_addr: Addr, dst_addr: Addr, length: u64, protocol: ProtocolId) -> Self {
        TransferDescriptor1D {
            src_addr,
            dst_addr,
            length,
            src_protocol: protocol,
            dst_protocol: protocol,
            options: BackendOptions::default(),
        }
    }

    pub fn with_protocols(mut self, src: ProtocolId, dst: ProtocolId) -> Self {
        self.src_protocol = src;
        self.dst_protocol = dst;
        self
    }

    pub fn with_options(mut self, options: BackendOptions) -> Self {
        self.options = options;
        self
    }

    pub fn addr(&self, side: Side) -> Addr {
        match side {
            Side::Read => self.src_addr,
            Side::Write => self.dst_addr,
        }
    }

    pub fn protocol(&self, side: Side) -> ProtocolId {
        match side {
            Side::Read => self.src_protocol,
            Side::Write => self.dst_protocol,
        }
    }

    /// Checks the no-wraparound invariant and the burst-cap floor.
    pub fn validate(&self, aw: u32, dw: u32) -> Result<(), DescriptorError> {
        let limit = address_limit(aw);
        for side in [Side::Read, Side::Write] {
            let addr = self.addr(side);
            if u128::from(addr) + u128::from(self.length) > limit || u128::from(addr) >= limit {
                return Err(DescriptorError::AddressOutOfRange {
                    side,
                    addr,
                    length: self.length,
                    aw,
                });
            }
        }
        let bus_bytes = u64::from(dw / 8).max(1);
        if let Some(cap) = self.options.user_burst_cap {
            if cap < bus_bytes {
                return Err(DescriptorError::CapBelowBusWidth { cap, bus_bytes });
            }
        }
        Ok(())
    }
}

/// One outer dimension of an N-D transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NdDim {
    pub src_stride: i64,
    pub dst_stride: i64,
    pub reps: u64,
}

/// A 1D transfer repeated over outer dimensions; `dims[0]` is the dimension
/// directly above the innermost one, the last entry is the outermost.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NdTransferDescriptor {
    pub base: TransferDescriptor1D,
    #[serde(default)]
    pub dims: Vec<NdDim>,
}

impl From<TransferDescriptor1D> for NdTransferDescriptor {
    fn from(base: TransferDescriptor1D) -> Self {
        NdTransferDescriptor { base, dims: Vec::new() }
    }
}

impl NdTransferDescriptor {
    /// Number of 1D transfers the descriptor expands to.
    pub fn num_transfers(&self) -> u64 {
        self.dims.iter().map(|d| d.reps).product()
    }

    pub fn total_bytes(&self) -> u64 {
        self.base.length * self.num_transfers()
    }
}

/// A protocol-legal read or write burst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegalBurst {
    pub addr: Addr,
    pub length: u64,
    pub side: Side,
    pub protocol: ProtocolId,
    pub seq: u32,
}

/// A protocol port of a back-end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortConfig {
    /// Port name, referenced by the memory configuration. Defaults to the
    /// protocol's identifier.
    #[serde(default)]
    pub name: String,
    pub protocol: ProtocolId,
    pub direction: Direction,
}

impl PortConfig {
    pub fn new(protocol: ProtocolId, direction: Direction) -> Self {
        PortConfig { name: protocol.as_str().to_string(), protocol, direction }
    }

    pub fn named(name: &str, protocol: ProtocolId, direction: Direction) -> Self {
        PortConfig { name: name.to_string(), protocol, direction }
    }
}

fn default_true() -> bool {
    true
}

fn default_buffer_depth() -> u32 {
    3
}

/// Compile-time parameters of one back-end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub aw: u32,
    pub dw: u32,
    pub nax_read: u32,
    pub nax_write: u32,
    pub ports: Vec<PortConfig>,
    #[serde(default = "default_true")]
    pub has_legalizer: bool,
    #[serde(default = "default_true")]
    pub has_error_handler: bool,
    /// Dataflow-element depth in bus-width entries.
    #[serde(default = "default_buffer_depth")]
    pub buffer_depth: u32,
    #[serde(default)]
    pub reject_zero_length: bool,
}

impl EngineConfig {
    /// Base configuration: 32-bit address and data width, one AXI read-write port.
    pub fn base(nax: u32) -> Self {
        EngineConfig {
            aw: 32,
            dw: 32,
            nax_read: nax,
            nax_write: nax,
            ports: vec![PortConfig::new(ProtocolId::Axi, Direction::ReadWrite)],
            has_legalizer: true,
            has_error_handler: true,
            buffer_depth: default_buffer_depth(),
            reject_zero_length: false,
        }
    }

    pub fn bus_bytes(&self) -> u64 {
        u64::from(self.dw / 8).max(1)
    }

    /// First port able to serve `side` with `protocol`.
    pub fn port_for(&self, protocol: ProtocolId, side: Side) -> Option<usize> {
        self.ports.iter().position(|p| {
            p.protocol == protocol
                && match side {
                    Side::Read => p.direction.can_read(),
                    Side::Write => p.direction.can_write(),
                }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigViolation {
    #[error("invalid width for `{field}`: {value}")]
    InvalidWidth { field: &'static str, value: u32 },
    #[error("no read-capable port")]
    NoReadPort,
    #[error("no write-capable port")]
    NoWritePort,
    #[error("`{field}` must be at least 1")]
    ZeroCapacity { field: &'static str },
    #[error("duplicate port name `{name}`")]
    DuplicatePort { name: String },
    #[error("port `{name}`: protocol {protocol} cannot serve direction {direction:?}")]
    UnsupportedDirection {
        name: String,
        protocol: ProtocolId,
        direction: Direction,
    },
}

/// Every violation found while validating a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigErrors(pub Vec<ConfigViolation>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "invalid engine configuration: {}", msgs.join("; "))
    }
}

/// An [`EngineConfig`] whose invariants have been checked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "EngineConfig", into = "EngineConfig")]
pub struct ValidatedConfig(EngineConfig);

impl ValidatedConfig {
    pub fn into_inner(self) -> EngineConfig {
        self.0
    }
}

impl Deref for ValidatedConfig {
    type Target = EngineConfig;

    fn deref(&self) -> &EngineConfig {
        &self.0
    }
}

impl From<ValidatedConfig> for EngineConfig {
    fn from(v: ValidatedConfig) -> Self {
        v.0
    }
}

impl TryFrom<EngineConfig> for ValidatedConfig {
    type Error = ConfigErrors;

    fn try_from(cfg: EngineConfig) -> Result<Self, ConfigErrors> {
        validate_config(cfg)
    }
}

/// Returns the configuration if every invariant holds, otherwise all
/// violations found.
pub fn validate_config(cfg: EngineConfig) -> Result<ValidatedConfig, ConfigErrors> {
    let mut errs = Vec::new();
    if !(16..=64).contains(&cfg.aw) {
        errs.push(ConfigViolation::InvalidWidth { field: "aw", value: cfg.aw });
    }
    if !(8..=1024).contains(&cfg.dw) || !cfg.dw.is_power_of_two() {
        errs.push(ConfigViolation::InvalidWidth { field: "dw", value: cfg.dw });
    }
    for (field, v) in [
        ("nax_read", cfg.nax_read),
        ("nax_write", cfg.nax_write),
        ("buffer_depth", cfg.buffer_depth),
    ] {
        if v == 0 {
            errs.push(ConfigViolation::ZeroCapacity { field });
        }
    }
    for (i, p) in cfg.ports.iter().enumerate() {
        if cfg.ports[..i].iter().any(|q| q.name == p.name) {
            errs.push(ConfigViolation::DuplicatePort { name: p.name.clone() });
        }
        let caps = p.protocol.capabilities();
        if (p.direction.can_read() && !caps.read_capable)
            || (p.direction.can_write() && !caps.write_capable)
        {
            errs.push(ConfigViolation::UnsupportedDirection {
                name: p.name.clone(),
                protocol: p.protocol,
                direction: p.direction,
            });
        }
    }
    let readable = cfg
        .ports
        .iter()
        .any(|p| p.direction.can_read() && p.protocol.capabilities().read_capable);
    let writable = cfg
        .ports
        .iter()
        .any(|p| p.direction.can_write() && p.protocol.capabilities().write_capable);
    if !readable {
        errs.push(ConfigViolation::NoReadPort);
    }
    if !writable {
        errs.push(ConfigViolation::NoWritePort);
    }
    if errs.is_empty() {
        Ok(ValidatedConfig(cfg))
    } else {
        Err(ConfigErrors(errs))
    }
}
