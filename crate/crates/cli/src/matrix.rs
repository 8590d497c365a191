use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bsmm::bitmatrix::{p2s_pack, p2s_unpack, value_range, BitParallelMatrix, LayoutParams};
use bsmm::formats::{bsmx_bytes, bsmx_to_matrix, csv_string, read_matrix, write_bsmx, write_raw, MatrixFormat};
use bsmm::isa::P2sOp;
use bsmm::simulator::{p2s_cycles, HwConfig};
use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{HwArgs, Manifest};
use crate::Invalid;

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub rows: usize,
    #[arg(long)]
    pub cols: usize,
    #[arg(long)]
    pub bits: u32,
    #[arg(long)]
    pub signed: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the identity instead of random values
    #[arg(long)]
    pub identity: bool,
    /// Storage word width of .bsmx output
    #[arg(long, default_value_t = 64)]
    pub word_width: usize,
    /// Output path; the extension selects CSV, BSMX or raw
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct P2sArgs {
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Bits per element; inferred from CSV values when absent
    #[arg(long)]
    pub precision: Option<u32>,
    #[arg(long)]
    pub signed: bool,
    /// Bit-serial output: a BSMX container for .bsmx, the bare payload otherwise
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub hw: HwArgs,
}

#[derive(Debug, Args)]
pub struct S2pArgs {
    /// Bare payload written by `p2s`, or a .bsmx container
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long)]
    pub precision: Option<u32>,
    #[arg(long)]
    pub signed: bool,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub hw: HwArgs,
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn load(path: &Path, bits: Option<u32>, signed: bool) -> Result<BitParallelMatrix> {
    Ok(read_matrix(path, bits, signed)?)
}

/// CSV text with the manifest as a comment header.
pub fn csv_with_header(manifest: &Manifest, rows: &[Vec<i64>]) -> String {
    manifest.header() + &csv_string(rows)
}

fn layout(cfg: &HwConfig) -> Result<LayoutParams> {
    Ok(LayoutParams::new(cfg.read_bus_bits, cfg.write_bus_bits, cfg.max_precision)?)
}

pub fn gen(a: &GenArgs) -> Result<()> {
    let m = if a.identity {
        if a.rows != a.cols {
            return Err(Invalid(format!("identity needs a square shape, got {}x{}", a.rows, a.cols)).into());
        }
        BitParallelMatrix::identity(a.rows, a.bits, a.signed)?
    } else {
        let (lo, hi) = value_range(a.bits, a.signed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        let elems = (0..a.rows * a.cols).map(|_| rng.gen_range(lo..=hi)).collect();
        BitParallelMatrix::new(a.rows, a.cols, a.bits, a.signed, elems)?
    };
    let mut man = Manifest::new("gen");
    man.add("rows", a.rows)
        .add("cols", a.cols)
        .add("bits", a.bits)
        .add("signed", a.signed)
        .add("seed", a.seed)
        .add("identity", a.identity)
        .path("out", &a.out);
    match MatrixFormat::from_path(&a.out) {
        MatrixFormat::Csv => write_text(&a.out, &csv_with_header(&man, &m.to_rows()))?,
        MatrixFormat::Bsmx => write_bsmx(&a.out, &m, a.word_width)?,
        MatrixFormat::Raw => write_raw(&a.out, &m)?,
    }
    print!("{}", man.header());
    Ok(())
}

pub fn p2s(a: &P2sArgs) -> Result<()> {
    let cfg = a.hw.resolve()?;
    let m = load(&a.input, a.precision, a.signed)?;
    if let Some(p) = a.precision {
        if p != m.bits() {
            return Err(Invalid(format!("{} holds {}-bit elements, not {p}", a.input.display(), m.bits())).into());
        }
    }
    let lp = layout(&cfg)?;
    let payload = p2s_pack(&m, &lp).with_context(|| format!("converting {}", a.input.display()))?;
    let bytes = match MatrixFormat::from_path(&a.out) {
        MatrixFormat::Bsmx => bsmx_bytes(&m, lp.write_bus_bits),
        _ => payload.clone(),
    };
    fs::write(&a.out, &bytes).with_context(|| format!("writing {}", a.out.display()))?;
    let op = P2sOp {
        src_base: 0,
        dst_base: 0,
        rows: m.rows() as u64,
        cols: m.cols() as u64,
        precision: u64::from(m.bits()),
    };
    let input_bytes = m.rows() * m.cols() * cfg.max_precision.div_ceil(8) as usize;
    let mut man = Manifest::new("p2s");
    man.path("input", &a.input)
        .path("out", &a.out)
        .add("rows", m.rows())
        .add("cols", m.cols())
        .add("precision", m.bits())
        .add("signed", m.signed())
        .hw(&cfg);
    print!("{}", man.header());
    println!("input_bytes={input_bytes}");
    println!("payload_bytes={}", payload.len());
    println!("padded_cols={}", lp.padded_cols(m.cols()));
    println!("modeled_cycles={}", p2s_cycles(&op, &cfg));
    Ok(())
}

pub fn s2p(a: &S2pArgs) -> Result<()> {
    let cfg = a.hw.resolve()?;
    let data = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let m = if MatrixFormat::from_path(&a.input) == MatrixFormat::Bsmx {
        bsmx_to_matrix(&data)
            .map_err(Invalid)
            .with_context(|| format!("decoding {}", a.input.display()))?
    } else {
        let (Some(rows), Some(cols), Some(bits)) = (a.rows, a.cols, a.precision) else {
            return Err(Invalid("a bare payload needs --rows, --cols and --precision".into()).into());
        };
        p2s_unpack(&data, rows, cols, bits, a.signed, &layout(&cfg)?)
            .with_context(|| format!("decoding {}", a.input.display()))?
    };
    let mut man = Manifest::new("s2p");
    man.path("input", &a.input)
        .path("out", &a.out)
        .add("rows", m.rows())
        .add("cols", m.cols())
        .add("precision", m.bits())
        .add("signed", m.signed())
        .hw(&cfg);
    write_text(&a.out, &csv_with_header(&man, &m.to_rows()))?;
    print!("{}", man.header());
    Ok(())
}
