// SPDX-License-Identifier: Apache-2.0

//! Cycle-approximate model of a modular DMA engine plus analytical area,
//! timing and latency estimators.

pub mod config;
pub mod costmodel;
pub mod engine;
pub mod frontend;
pub mod legalizer;
pub mod memsys;
pub mod metrics;
pub mod midend;
pub mod presets;
pub mod protocol;
pub mod sim;
pub mod types;

pub use config::{FrontendConfig, MemoryConfig, SimConfig, SimConfigError, Workload};
pub use engine::{Backend, ErrorMode, SimError};
pub use frontend::{Descriptor64, FrontendError, RegFileState};
pub use legalizer::{legalize, legalize_side, LegalizeError, LegalizedTransfer};
pub use memsys::{EndpointTiming, MemPreset, Memory, MemsysError};
pub use metrics::{SimReport, SweepRow, TraceEvent, TraceKind};
pub use midend::{Boundary, MidendChain, MidendError, MidendSpec};
pub use protocol::{ProtocolId, UnknownProtocol};
pub use sim::{simulate, RunError, RunOptions, SimOutput, Simulation};
pub use types::*;
