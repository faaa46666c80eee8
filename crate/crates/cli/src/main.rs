// SPDX-License-Identifier: Apache-2.0

//! `idma-sim`: batch driver for the DMA engine simulator and cost models.
//!
//! Exit codes: 0 on success, 1 on configuration or other errors, 2 when a
//! simulated manager violates its protocol contract.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "idma-sim", version, about = "Cycle-approximate DMA engine simulator and cost models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Area,
    Timing,
    Latency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum SideFilter {
    Read,
    Write,
    #[default]
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation and print its report.
    Simulate {
        /// Preset name or path to a JSON configuration.
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the event trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Run one simulation per value of a parameter.
    Sweep {
        #[arg(long)]
        config: String,
        /// One of nax, nax_read, nax_write, dw, aw, buffer_depth,
        /// piece_bytes, total_bytes, latency, max_outstanding, mem_preset.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Print the legal bursts of one transfer.
    Legalize {
        #[arg(long, value_parser = commands::parse_u64)]
        src: u64,
        #[arg(long, value_parser = commands::parse_u64)]
        dst: u64,
        #[arg(long, value_parser = commands::parse_u64)]
        len: u64,
        /// Source protocol; also the destination protocol unless
        /// `--dst-proto` is given.
        #[arg(long, default_value = "axi")]
        proto: String,
        #[arg(long)]
        dst_proto: Option<String>,
        #[arg(long, default_value_t = 32)]
        dw: u32,
        /// Upper bound on any burst, in bytes.
        #[arg(long, value_parser = commands::parse_u64)]
        cap: Option<u64>,
        /// Cut both sides at the same offsets.
        #[arg(long)]
        coupled: bool,
        #[arg(long, value_enum, default_value_t)]
        side: SideFilter,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Evaluate a cost model for a configuration.
    Estimate {
        #[arg(value_enum)]
        model: Model,
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// List the shipped presets, or print one.
    Presets {
        name: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out, trace, seed, format } => {
            commands::simulate(&config, out.as_deref(), trace.as_deref(), seed, format)
        }
        Command::Sweep { config, param, values, out, seed, format } => {
            commands::sweep(&config, &param, &values, out.as_deref(), seed, format)
        }
        Command::Legalize { src, dst, len, proto, dst_proto, dw, cap, coupled, side, out, format } => {
            let req = commands::LegalizeRequest { src, dst, len, proto, dst_proto, dw, cap, coupled, side };
            commands::legalize(&req, out.as_deref(), format)
        }
        Command::Estimate { model, config, out, format } => {
            commands::estimate(model, &config, out.as_deref(), format)
        }
        Command::Presets { name } => commands::presets(name.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("idma-sim: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
