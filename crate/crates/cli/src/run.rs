use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use bsmm::bitmatrix::{decompose, BitParallelMatrix};
use bsmm::isa::{decode, encode, validate, Program};
use bsmm::refgemm::{gemm_bitserial_with, gemm_naive_with, gemm_wavefront_with, AccumMatrix};
use bsmm::scheduler::{generate_with, prepare, read_result, summarize, ScheduleOptions};
use bsmm::simulator::{run_timed, HwConfig, MemModel, SimReport};
use clap::Args;

use crate::config::{HwArgs, Manifest};
use crate::matrix::{csv_with_header, load, write_text};
use crate::{Engine, Format, Invalid, Operands};

#[derive(Debug, Args)]
pub struct GemmArgs {
    #[command(flatten)]
    pub operands: Operands,
    #[arg(long, value_enum, default_value_t = Engine::Sim)]
    pub engine: Engine,
    /// Schedule fetch, execute and result of consecutive tiles concurrently
    #[arg(long)]
    pub overlap: bool,
    /// Run the simulator with and without overlap and report the cycle ratio
    #[arg(long)]
    pub compare_overlap: bool,
    /// Force the K-chunk size in words
    #[arg(long)]
    pub chunk_words: Option<usize>,
    /// Result CSV; printed to stdout when absent
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Simulator statistics as metric,value CSV
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Per-instruction occupancy trace as CSV
    #[arg(long, value_name = "PATH")]
    pub trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[command(flatten)]
    pub hw: HwArgs,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[command(flatten)]
    pub operands: Operands,
    #[arg(long)]
    pub overlap: bool,
    #[arg(long)]
    pub chunk_words: Option<usize>,
    /// Program text output
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Print every instruction mnemonic per queue
    #[arg(long)]
    pub listing: bool,
    #[command(flatten)]
    pub hw: HwArgs,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, value_name = "PATH")]
    pub program: PathBuf,
    /// Operands to lay out in memory; the product is read back afterwards
    #[arg(long, value_name = "PATH", requires = "rhs")]
    pub lhs: Option<PathBuf>,
    #[arg(long, value_name = "PATH", requires = "lhs")]
    pub rhs: Option<PathBuf>,
    #[arg(long)]
    pub lhs_bits: Option<u32>,
    #[arg(long)]
    pub rhs_bits: Option<u32>,
    #[arg(long)]
    pub lhs_signed: bool,
    #[arg(long)]
    pub rhs_signed: bool,
    /// Size of a zeroed memory image when no operands are given
    #[arg(long, default_value_t = 1 << 20)]
    pub mem_bytes: usize,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub trace: Option<PathBuf>,
    /// Print a text timeline of stage occupancy
    #[arg(long)]
    pub timeline: bool,
    #[arg(long, default_value_t = 100)]
    pub width: usize,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[command(flatten)]
    pub hw: HwArgs,
}

fn load_operands(o: &Operands) -> Result<(BitParallelMatrix, BitParallelMatrix)> {
    Ok((load(&o.lhs, o.lhs_bits, o.lhs_signed)?, load(&o.rhs, o.rhs_bits, o.rhs_signed)?))
}

fn operand_manifest(man: &mut Manifest, o: &Operands, l: &BitParallelMatrix, r: &BitParallelMatrix) {
    man.path("lhs", &o.lhs)
        .add("lhs_shape", format!("{}x{} {}-bit {}", l.rows(), l.cols(), l.bits(), signedness(l.signed())))
        .path("rhs", &o.rhs)
        .add("rhs_shape", format!("{}x{} {}-bit {}", r.rows(), r.cols(), r.bits(), signedness(r.signed())));
}

fn signedness(s: bool) -> &'static str {
    if s {
        "signed"
    } else {
        "unsigned"
    }
}

fn report_pairs(rep: &SimReport) -> Vec<(String, String)> {
    rep.to_kv()
        .lines()
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

fn render_pairs(pairs: &[(String, String)], format: Format) -> String {
    match format {
        Format::Csv => {
            let mut s = String::from("metric,value\n");
            for (k, v) in pairs {
                s.push_str(&format!("{k},{v}\n"));
            }
            s
        }
        Format::Table => {
            let w = pairs.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
            pairs.iter().map(|(k, v)| format!("{k:<w$}  {v}\n")).collect()
        }
    }
}

fn write_result(man: &Manifest, out: Option<&PathBuf>, res: &AccumMatrix) -> Result<()> {
    match out {
        Some(p) => write_text(p, &csv_with_header(man, &res.to_rows())),
        None => {
            print!("{}", bsmm::formats::csv_string(&res.to_rows()));
            Ok(())
        }
    }
}

fn write_sim_outputs(man: &Manifest, rep: &SimReport, report: Option<&PathBuf>, trace: Option<&PathBuf>) -> Result<()> {
    if let Some(p) = report {
        write_text(p, &(man.header() + &render_pairs(&report_pairs(rep), Format::Csv)))?;
    }
    if let Some(p) = trace {
        write_text(p, &(man.header() + &rep.trace_csv()))?;
    }
    Ok(())
}

fn simulate(l: &BitParallelMatrix, r: &BitParallelMatrix, cfg: &HwConfig, opts: &ScheduleOptions) -> Result<(AccumMatrix, SimReport)> {
    let (problem, mem) = prepare(l, r, cfg)?;
    let program = generate_with(&problem, cfg, opts)?;
    let (mem, rep) = run_timed(&program, mem, cfg)?;
    Ok((read_result(&mem, &problem, cfg)?, rep))
}

pub fn gemm(a: &GemmArgs) -> Result<()> {
    let cfg = a.hw.resolve()?;
    let (l, r) = load_operands(&a.operands)?;
    let mut man = Manifest::new("gemm");
    operand_manifest(&mut man, &a.operands, &l, &r);
    man.add("engine", format!("{:?}", a.engine).to_lowercase())
        .add("overlap", a.overlap)
        .add("compare_overlap", a.compare_overlap)
        .hw(&cfg);
    if let Some(c) = a.chunk_words {
        man.add("chunk_words", c);
    }
    print!("{}", man.header());

    let serial = |m: &BitParallelMatrix| decompose(m, 64);
    let (res, rep) = match a.engine {
        Engine::Naive => (gemm_naive_with(&l, &r, cfg.acc_bits)?, None),
        Engine::Bitserial => (gemm_bitserial_with(&serial(&l)?, &serial(&r)?, cfg.acc_bits)?, None),
        Engine::Wavefront => (gemm_wavefront_with(&serial(&l)?, &serial(&r)?, cfg.acc_bits)?, None),
        Engine::Sim => {
            let opts = ScheduleOptions {
                overlap: a.overlap,
                chunk_words: a.chunk_words,
            };
            let (res, rep) = simulate(&l, &r, &cfg, &opts)?;
            (res, Some(rep))
        }
    };
    write_result(&man, a.out.as_ref(), &res)?;

    if let Some(rep) = &rep {
        print!("{}", render_pairs(&report_pairs(rep), a.format));
        write_sim_outputs(&man, rep, a.report.as_ref(), a.trace.as_ref())?;
    }
    if a.compare_overlap {
        let mut cycles = [0u64; 2];
        for (i, overlap) in [false, true].into_iter().enumerate() {
            let opts = ScheduleOptions {
                overlap,
                chunk_words: a.chunk_words,
            };
            let (other, rep) = simulate(&l, &r, &cfg, &opts)?;
            if other != res {
                return Err(Invalid(format!("overlap={overlap} schedule produced a different product")).into());
            }
            cycles[i] = rep.cycles_total;
        }
        let pairs = vec![
            ("cycles_serial".to_string(), cycles[0].to_string()),
            ("cycles_overlap".to_string(), cycles[1].to_string()),
            ("overlap_speedup".to_string(), format!("{:.4}", cycles[0] as f64 / cycles[1] as f64)),
        ];
        print!("{}", render_pairs(&pairs, a.format));
    }
    Ok(())
}

pub fn schedule(a: &ScheduleArgs) -> Result<()> {
    let cfg = a.hw.resolve()?;
    let (l, r) = load_operands(&a.operands)?;
    let (problem, _) = prepare(&l, &r, &cfg)?;
    let opts = ScheduleOptions {
        overlap: a.overlap,
        chunk_words: a.chunk_words,
    };
    let program = generate_with(&problem, &cfg, &opts)?;
    let mut man = Manifest::new("schedule");
    operand_manifest(&mut man, &a.operands, &l, &r);
    man.add("overlap", a.overlap).path("out", &a.out).hw(&cfg);
    if let Some(c) = a.chunk_words {
        man.add("chunk_words", c);
    }
    write_text(&a.out, &(man.header() + &encode(&program)))?;

    print!("{}", man.header());
    let (f, e, r) = program.counts();
    println!("fetch_instructions={f}");
    println!("execute_instructions={e}");
    println!("result_instructions={r}");
    for d in validate(&program, &cfg).warnings() {
        println!("{d}");
    }
    if a.listing {
        for (q, items) in summarize(&program) {
            println!("{q}: {}", items.join(" "));
        }
    }
    Ok(())
}

fn load_program(path: &PathBuf) -> Result<Program> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    decode(&text).with_context(|| format!("decoding {}", path.display()))
}

pub fn sim(a: &SimArgs) -> Result<()> {
    let cfg = a.hw.resolve()?;
    let program = load_program(&a.program)?;
    let check = validate(&program, &cfg);
    if !check.is_valid() {
        for d in check.errors() {
            eprintln!("{d}");
        }
        return Err(Invalid(format!("{} fails validation", a.program.display())).into());
    }

    let mut man = Manifest::new("sim");
    man.path("program", &a.program);
    let operands = match (&a.lhs, &a.rhs) {
        (Some(lp), Some(rp)) => {
            let l = load(lp, a.lhs_bits, a.lhs_signed)?;
            let r = load(rp, a.rhs_bits, a.rhs_signed)?;
            man.path("lhs", lp).path("rhs", rp);
            Some((l, r))
        }
        _ => {
            man.add("mem_bytes", a.mem_bytes);
            None
        }
    };
    man.hw(&cfg);
    print!("{}", man.header());

    let (mem, problem) = match &operands {
        Some((l, r)) => {
            let (problem, mem) = prepare(l, r, &cfg)?;
            (mem, Some(problem))
        }
        None => (MemModel::new(a.mem_bytes), None),
    };
    let (mem, rep) = run_timed(&program, mem, &cfg)?;
    if let Some(problem) = &problem {
        write_result(&man, a.out.as_ref(), &read_result(&mem, problem, &cfg)?)?;
    }
    print!("{}", render_pairs(&report_pairs(&rep), a.format));
    for h in &rep.hazards {
        println!("hazard: {h}");
    }
    if a.timeline {
        print!("{}", rep.timeline(a.width));
    }
    write_sim_outputs(&man, &rep, a.report.as_ref(), a.trace.as_ref())
}
