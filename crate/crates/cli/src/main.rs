mod config;
mod matrix;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use bsmm::bitmatrix::BitMatrixError;
use bsmm::compressor::CompressorError;
use bsmm::formats::FormatError;
use bsmm::isa::DecodeError;
use bsmm::refgemm::GemmError;
use bsmm::scheduler::{RunError, ScheduleError};
use bsmm::simulator::{ConfigError, SimError};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "bsmm", version, about = "Bit-serial matrix multiplication toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    Naive,
    Bitserial,
    Wavefront,
    Sim,
}

/// Operand files shared by the GEMM front ends.
#[derive(Debug, Clone, clap::Args)]
pub struct Operands {
    /// Left-hand matrix (M x K): .csv, .bsmx or raw with a .hdr sidecar
    #[arg(long, value_name = "PATH")]
    pub lhs: PathBuf,
    /// Right-hand matrix (K x N)
    #[arg(long, value_name = "PATH")]
    pub rhs: PathBuf,
    /// Precision of a CSV left-hand matrix; inferred when absent
    #[arg(long)]
    pub lhs_bits: Option<u32>,
    #[arg(long)]
    pub rhs_bits: Option<u32>,
    #[arg(long)]
    pub lhs_signed: bool,
    #[arg(long)]
    pub rhs_signed: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a random or identity matrix
    Gen(matrix::GenArgs),
    /// Convert a bit-parallel matrix to the bit-serial layout
    P2s(matrix::P2sArgs),
    /// Convert a bit-serial payload back to a CSV matrix
    S2p(matrix::S2pArgs),
    /// Multiply two matrices with one of the engines
    Gemm(run::GemmArgs),
    /// Generate an overlay program for a product
    Schedule(run::ScheduleArgs),
    /// Run a program on the cycle-level simulator
    Sim(run::SimArgs),
    /// Resource and throughput estimates
    Cost(report::CostArgs),
    /// Compressor tree plan for a popcount width
    Compressor(report::CompressorArgs),
}

/// Process exit status for a failed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Other = 1,
    Validation = 2,
    Capacity = 3,
    Overflow = 4,
    Io = 5,
}

/// Marker error for invalid input that has already been explained.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Invalid(pub String);

fn classify_sim(e: &SimError) -> Failure {
    match e {
        SimError::Overflow { .. } => Failure::Overflow,
        _ => Failure::Validation,
    }
}

fn classify_schedule(e: &ScheduleError) -> Failure {
    match e {
        ScheduleError::Capacity { .. } => Failure::Capacity,
        _ => Failure::Validation,
    }
}

fn classify_gemm(e: &GemmError) -> Failure {
    match e {
        GemmError::Overflow { .. } => Failure::Overflow,
        _ => Failure::Validation,
    }
}

pub fn classify(err: &anyhow::Error) -> Failure {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<RunError>() {
            return match e {
                RunError::Schedule(s) => classify_schedule(s),
                RunError::Sim(s) => classify_sim(s),
                RunError::Gemm(g) => classify_gemm(g),
                RunError::Matrix(_) => Failure::Validation,
            };
        }
        if let Some(e) = cause.downcast_ref::<ScheduleError>() {
            return classify_schedule(e);
        }
        if let Some(e) = cause.downcast_ref::<SimError>() {
            return classify_sim(e);
        }
        if let Some(e) = cause.downcast_ref::<GemmError>() {
            return classify_gemm(e);
        }
        if let Some(e) = cause.downcast_ref::<FormatError>() {
            return match e {
                FormatError::Io { .. } => Failure::Io,
                _ => Failure::Validation,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return Failure::Io;
        }
        if cause.downcast_ref::<ConfigError>().is_some()
            || cause.downcast_ref::<DecodeError>().is_some()
            || cause.downcast_ref::<BitMatrixError>().is_some()
            || cause.downcast_ref::<CompressorError>().is_some()
            || cause.downcast_ref::<Invalid>().is_some()
        {
            return Failure::Validation;
        }
    }
    Failure::Other
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => matrix::gen(&a),
        Command::P2s(a) => matrix::p2s(&a),
        Command::S2p(a) => matrix::s2p(&a),
        Command::Gemm(a) => run::gemm(&a),
        Command::Schedule(a) => run::schedule(&a),
        Command::Sim(a) => run::sim(&a),
        Command::Cost(a) => report::cost(&a),
        Command::Compressor(a) => report::compressor(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e) as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn failures_map_to_exit_codes() {
        let cap: anyhow::Error = RunError::Schedule(ScheduleError::Capacity {
            dimension: "bm",
            needed: 9,
            available: 4,
        })
        .into();
        assert_eq!(classify(&cap), Failure::Capacity);
        let ovf = anyhow::Error::from(GemmError::Overflow {
            row: 0,
            col: 0,
            value: 300,
            acc_bits: 8,
        })
        .context("multiplying");
        assert_eq!(classify(&ovf), Failure::Overflow);
        let io = Err::<(), _>(std::io::Error::new(std::io::ErrorKind::NotFound, "gone"))
            .context("reading x")
            .unwrap_err();
        assert_eq!(classify(&io), Failure::Io);
        assert_eq!(classify(&ConfigError::UnknownKey("x".into()).into()), Failure::Validation);
        assert_eq!(classify(&anyhow::anyhow!("plain")), Failure::Other);
    }
}
