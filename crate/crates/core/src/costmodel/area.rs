// SPDX-License-Identifier: Apache-2.0

//! Table-driven linear area model in gate equivalents (GE).

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::protocol::ProtocolId;
use crate::types::{EngineConfig, Side};

pub const BASE_AW: u32 = 32;
pub const BASE_DW: u32 = 32;
pub const BASE_NAX: u32 = 16;

const BUILTIN: &str = include_str!("../../data/area_table.csv");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AreaError {
    #[error("protocol `{0}` has no {1} column in the area table")]
    UnknownProtocol(ProtocolId, Side),
    #[error("area table line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Parameter a row scales with, linearly from the base configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Nax,
    Aw,
    Dw,
    Const,
}

impl FromStr for Scale {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nax" => Ok(Scale::Nax),
            "aw" => Ok(Scale::Aw),
            "dw" => Ok(Scale::Dw),
            "const" => Ok(Scale::Const),
            other => Err(format!("unknown scale `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AreaCell {
    pub ge: f64,
    /// Only the largest such cell per direction counts.
    pub max_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaRow {
    pub unit: String,
    pub scale: Scale,
    pub base: f64,
    /// Keyed by column name, e.g. `axi_r`.
    pub cells: BTreeMap<String, AreaCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaTable {
    pub rows: Vec<AreaRow>,
}

/// Column family of a protocol; both TileLink variants share one.
pub fn column_family(p: ProtocolId) -> &'static str {
    match p {
        ProtocolId::Axi => "axi",
        ProtocolId::AxiLite => "axi_lite",
        ProtocolId::AxiStream => "axi_stream",
        ProtocolId::Obi => "obi",
        ProtocolId::TileLinkUL | ProtocolId::TileLinkUH => "tilelink",
        ProtocolId::Init => "init",
    }
}

pub fn column(p: ProtocolId, side: Side) -> String {
    let d = match side {
        Side::Read => "r",
        Side::Write => "w",
    };
    format!("{}_{d}", column_family(p))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitArea {
    pub unit: String,
    pub base: f64,
    pub read: f64,
    pub write: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaBreakdown {
    pub units: Vec<UnitArea>,
    pub total: f64,
}

impl AreaBreakdown {
    pub fn unit(&self, name: &str) -> Option<&UnitArea> {
        self.units.iter().find(|u| u.unit == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("unit,base_ge,read_ge,write_ge,total_ge\n");
        for u in &self.units {
            s.push_str(&format!("{},{:.1},{:.1},{:.1},{:.1}\n", u.unit, u.base, u.read, u.write, u.total));
        }
        s.push_str(&format!("total,,,,{:.1}\n", self.total));
        s
    }
}

fn factor(scale: Scale, value: u32, base: u32) -> f64 {
    match scale {
        Scale::Const => 1.0,
        _ => f64::from(value) / f64::from(base),
    }
}

impl AreaTable {
    /// The shipped table.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("builtin area table parses")
    }

    /// Parses the CSV format of `data/area_table.csv`. Lines starting with
    /// `#` are comments.
    pub fn parse(text: &str) -> Result<Self, AreaError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(AreaError::Parse { line: 0, msg: "empty table".into() })?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 3 || cols[..3] != ["unit", "scale", "base"] {
            return Err(AreaError::Parse { line: hline, msg: "header must start with unit,scale,base".into() });
        }
        let mut rows = Vec::new();
        for (line, l) in lines {
            let err = |msg: String| AreaError::Parse { line, msg };
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            if f.len() != cols.len() {
                return Err(err(format!("expected {} fields, found {}", cols.len(), f.len())));
            }
            let num = |s: &str| -> Result<AreaCell, AreaError> {
                let (v, max_only) = match s.strip_suffix('*') {
                    Some(v) => (v, true),
                    None => (s, false),
                };
                let ge: f64 = v.parse().map_err(|_| err(format!("bad number `{s}`")))?;
                if !(ge >= 0.0 && ge.is_finite()) {
                    return Err(err(format!("negative coefficient `{s}`")));
                }
                Ok(AreaCell { ge, max_only })
            };
            let mut cells = BTreeMap::new();
            for (c, v) in cols[3..].iter().zip(&f[3..]) {
                cells.insert((*c).to_string(), num(v)?);
            }
            rows.push(AreaRow {
                unit: f[0].to_string(),
                scale: f[1].parse().map_err(err)?,
                base: num(f[2])?.ge,
                cells,
            });
        }
        Ok(AreaTable { rows })
    }

    pub fn row(&self, unit: &str) -> Option<&AreaRow> {
        self.rows.iter().find(|r| r.unit == unit)
    }

    /// Per-unit area of `cfg`.
    pub fn estimate(&self, cfg: &EngineConfig) -> Result<AreaBreakdown, AreaError> {
        let mut present: Vec<(ProtocolId, Side)> = Vec::new();
        for p in &cfg.ports {
            if p.direction.can_read() {
                present.push((p.protocol, Side::Read));
            }
            if p.direction.can_write() && p.protocol.capabilities().write_capable {
                present.push((p.protocol, Side::Write));
            }
        }
        let nax_base = cfg.nax_read.max(cfg.nax_write);
        let mut units = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let scaled = |side: Option<Side>| match row.scale {
                Scale::Nax => {
                    let n = match side {
                        Some(Side::Read) => cfg.nax_read,
                        Some(Side::Write) => cfg.nax_write,
                        None => nax_base,
                    };
                    factor(Scale::Nax, n, BASE_NAX)
                }
                Scale::Aw => factor(Scale::Aw, cfg.aw, BASE_AW),
                Scale::Dw => factor(Scale::Dw, cfg.dw, BASE_DW),
                Scale::Const => 1.0,
            };
            let base = row.base * scaled(None);
            let mut dir = [0.0f64; 2];
            let mut dir_max = [0.0f64; 2];
            for &(p, side) in &present {
                let col = column(p, side);
                let cell = row.cells.get(&col).ok_or(AreaError::UnknownProtocol(p, side))?;
                let v = cell.ge * scaled(Some(side));
                let k = usize::from(side == Side::Write);
                if cell.max_only {
                    dir_max[k] = dir_max[k].max(v);
                } else {
                    dir[k] += v;
                }
            }
            let read = dir[0] + dir_max[0];
            let write = dir[1] + dir_max[1];
            units.push(UnitArea { unit: row.unit.clone(), base, read, write, total: base + read + write });
        }
        let total = units.iter().map(|u| u.total).sum();
        Ok(AreaBreakdown { units, total })
    }
}

/// Area estimate with the shipped table.
pub fn estimate_area(cfg: &EngineConfig) -> Result<AreaBreakdown, AreaError> {
    AreaTable::builtin().estimate(cfg)
}
