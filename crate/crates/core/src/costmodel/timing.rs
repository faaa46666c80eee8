// SPDX-License-Identifier: Apache-2.0

//! Longest-path timing model:
//! `path = t0 + k_dw*DW + k_aw*AW + k_nax*log2(NAx) + Σ offset(protocol)`,
//! `f_max = 1 / path`.
//!
//! The default coefficients are synthetic placeholders, not measurements.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::nnls::{fit_nnls, NnlsError};
use crate::protocol::ProtocolId;
use crate::types::EngineConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimingError {
    #[error("timing model has no coefficients")]
    UnfittedModel,
    #[error("fit: {0}")]
    Fit(#[from] NnlsError),
    #[error("predicted path {0} ns is not positive")]
    NonPositivePath(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingCoefficients {
    pub t0: f64,
    pub k_dw: f64,
    pub k_aw: f64,
    pub k_nax: f64,
    /// Added once for each distinct protocol on the back-end.
    #[serde(default)]
    pub protocol_offset: BTreeMap<ProtocolId, f64>,
}

impl TimingCoefficients {
    /// Synthetic defaults, in ns.
    pub fn synthetic() -> Self {
        let offsets = [
            (ProtocolId::Axi, 0.040),
            (ProtocolId::AxiLite, 0.010),
            (ProtocolId::AxiStream, 0.015),
            (ProtocolId::Obi, 0.010),
            (ProtocolId::TileLinkUL, 0.012),
            (ProtocolId::TileLinkUH, 0.030),
            (ProtocolId::Init, 0.005),
        ];
        TimingCoefficients {
            t0: 0.55,
            k_dw: 0.0006,
            k_aw: 0.0015,
            k_nax: 0.025,
            protocol_offset: offsets.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingEstimate {
    pub longest_path_ns: f64,
    pub f_max_ghz: f64,
}

/// One observation for fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingSample {
    pub dw: u32,
    pub aw: u32,
    pub nax: u32,
    pub protocols: Vec<ProtocolId>,
    pub path_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingModel {
    pub coefficients: Option<TimingCoefficients>,
}

fn distinct(ps: impl IntoIterator<Item = ProtocolId>) -> Vec<ProtocolId> {
    let mut v: Vec<_> = ps.into_iter().collect();
    v.sort();
    v.dedup();
    v
}

fn features(dw: u32, aw: u32, nax: u32, protocols: &[ProtocolId]) -> Vec<f64> {
    let mut f = vec![1.0, f64::from(dw), f64::from(aw), f64::from(nax.max(1)).log2()];
    let present = distinct(protocols.iter().copied());
    f.extend(ProtocolId::ALL.iter().map(|p| if present.contains(p) { 1.0 } else { 0.0 }));
    f
}

impl TimingModel {
    pub fn unfitted() -> Self {
        TimingModel { coefficients: None }
    }

    pub fn synthetic() -> Self {
        TimingModel { coefficients: Some(TimingCoefficients::synthetic()) }
    }

    pub fn path(&self, dw: u32, aw: u32, nax: u32, protocols: &[ProtocolId]) -> Result<f64, TimingError> {
        let c = self.coefficients.as_ref().ok_or(TimingError::UnfittedModel)?;
        let offsets: f64 = distinct(protocols.iter().copied())
            .iter()
            .map(|p| c.protocol_offset.get(p).copied().unwrap_or(0.0))
            .sum();
        let path = c.t0
            + c.k_dw * f64::from(dw)
            + c.k_aw * f64::from(aw)
            + c.k_nax * f64::from(nax.max(1)).log2()
            + offsets;
        if path > 0.0 {
            Ok(path)
        } else {
            Err(TimingError::NonPositivePath(path))
        }
    }

    /// NAx is the larger of the read and write capacities.
    pub fn estimate(&self, cfg: &EngineConfig) -> Result<TimingEstimate, TimingError> {
        let protocols: Vec<_> = cfg.ports.iter().map(|p| p.protocol).collect();
        let path = self.path(cfg.dw, cfg.aw, cfg.nax_read.max(cfg.nax_write), &protocols)?;
        Ok(TimingEstimate { longest_path_ns: path, f_max_ghz: 1.0 / path })
    }

    /// Non-negative fit of all coefficients.
    pub fn fit(samples: &[TimingSample]) -> Result<Self, TimingError> {
        let rows: Vec<(Vec<f64>, f64)> = samples
            .iter()
            .map(|s| (features(s.dw, s.aw, s.nax, &s.protocols), s.path_ns))
            .collect();
        let fit = fit_nnls(&rows)?;
        let k = &fit.coefficients;
        Ok(TimingModel {
            coefficients: Some(TimingCoefficients {
                t0: k[0],
                k_dw: k[1],
                k_aw: k[2],
                k_nax: k[3],
                protocol_offset: ProtocolId::ALL.iter().copied().zip(k[4..].iter().copied()).collect(),
            }),
        })
    }
}

/// Timing with the synthetic defaults.
pub fn estimate_timing(cfg: &EngineConfig) -> Result<TimingEstimate, TimingError> {
    TimingModel::synthetic().estimate(cfg)
}
