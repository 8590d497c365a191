use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use bsmm::compressor::{counter_stats, estimated_luts, pipeline_depth, plan_for, reference_counter_stats, render_plan, CounterKind};
use bsmm::costmodel::{estimate, lut_errors, sweep, sweep_csv, ULTRA96_INSTANCES};
use bsmm::simulator::HwConfig;
use clap::Args;

use crate::config::{load_constants, Manifest};
use crate::{Format, Invalid};

#[derive(Debug, Args)]
pub struct CostArgs {
    /// One value or a comma-separated sweep list
    #[arg(long, value_delimiter = ',', default_value = "8")]
    pub dm: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "256")]
    pub dk: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "8")]
    pub dn: Vec<usize>,
    #[arg(long, default_value_t = 1024)]
    pub bm: usize,
    #[arg(long, default_value_t = 1024)]
    pub bn: usize,
    /// Clock frequency in Hz
    #[arg(long, default_value_t = 200e6)]
    pub fclk: f64,
    /// key=value file overriding the model constants
    #[arg(long, value_name = "PATH")]
    pub constants: Option<PathBuf>,
    /// Leave the P2S accelerator out of the LUT estimate
    #[arg(long)]
    pub no_p2s: bool,
    /// Compare the model against the built-in measured instances
    #[arg(long)]
    pub measured: bool,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct CompressorArgs {
    #[arg(long)]
    pub dk: usize,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

pub fn cost(a: &CostArgs) -> Result<()> {
    let c = load_constants(a.constants.as_deref())?;
    let mut configs = Vec::new();
    for &dm in &a.dm {
        for &dk in &a.dk {
            for &dn in &a.dn {
                let mut cfg = HwConfig::new(dm, dk, dn).with_buffers(a.bm, a.bn);
                cfg.f_clk_hz = a.fclk;
                cfg.validate()?;
                configs.push(cfg);
            }
        }
    }
    let mut man = Manifest::new("cost");
    let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    man.add("dm", list(&a.dm))
        .add("dk", list(&a.dk))
        .add("dn", list(&a.dn))
        .add("bm", a.bm)
        .add("bn", a.bn)
        .add("fclk", a.fclk)
        .add("include_p2s", !a.no_p2s);
    for line in c.to_kv().lines() {
        if let Some((k, v)) = line.split_once('=') {
            man.add(&format!("const.{k}"), v);
        }
    }
    print!("{}", man.header());

    let rows = sweep(&configs, &c, !a.no_p2s);
    match a.format {
        Format::Csv => print!("{}", sweep_csv(&rows)),
        Format::Table if rows.len() == 1 => {
            let r = &rows[0].1;
            println!("LUT total        {:.1}", r.lut_total);
            println!("LUT array        {:.1}", r.lut_array);
            println!("LUT per DPU      {:.2}", r.lut_dpu);
            println!("LUT base         {:.1}", r.lut_base);
            println!("LUT per op       {:.4}", r.luts_per_op());
            println!("BRAM total       {}", r.bram_total);
            println!("BRAM array       {}", r.bram_array);
            println!("ops per cycle    {}", r.peak_binary_ops_per_cycle);
            println!("peak GOPS        {:.1}", r.peak_gops);
        }
        Format::Table => {
            println!("{:>4} {:>5} {:>4} {:>10} {:>8} {:>6} {:>10}", "Dm", "Dk", "Dn", "LUT", "LUT/op", "BRAM", "GOPS");
            for (cfg, r) in &rows {
                println!(
                    "{:>4} {:>5} {:>4} {:>10.1} {:>8.4} {:>6} {:>10.1}",
                    cfg.dm,
                    cfg.dk,
                    cfg.dn,
                    r.lut_total,
                    r.luts_per_op(),
                    r.bram_total,
                    r.peak_gops
                );
            }
        }
    }

    if a.measured {
        let errs = lut_errors(&ULTRA96_INSTANCES, &c, !a.no_p2s);
        let mut out = String::new();
        match a.format {
            Format::Csv => out.push_str("dm,dk,dn,lut_measured,lut_model,lut_error,bram_measured,bram_model,gops_measured,gops_model\n"),
            Format::Table => {
                let _ = writeln!(
                    out,
                    "{:>4} {:>5} {:>4} {:>9} {:>9} {:>7} {:>5} {:>5} {:>9} {:>9}",
                    "Dm", "Dk", "Dn", "LUT", "model", "err%", "BRAM", "model", "GOPS", "model"
                );
            }
        }
        for (m, err) in ULTRA96_INSTANCES.iter().zip(&errs) {
            let mut cfg = m.config();
            cfg.bm = a.bm;
            cfg.bn = a.bn;
            let r = estimate(&cfg, &c, !a.no_p2s);
            let _ = match a.format {
                Format::Csv => writeln!(
                    out,
                    "{},{},{},{},{:.1},{:.4},{},{},{},{:.1}",
                    m.dm, m.dk, m.dn, m.luts, r.lut_total, err, m.brams, r.bram_total, m.gops, r.peak_gops
                ),
                Format::Table => writeln!(
                    out,
                    "{:>4} {:>5} {:>4} {:>9} {:>9.0} {:>7.2} {:>5} {:>5} {:>9.1} {:>9.1}",
                    m.dm,
                    m.dk,
                    m.dn,
                    m.luts,
                    r.lut_total,
                    err * 100.0,
                    m.brams,
                    r.bram_total,
                    m.gops,
                    r.peak_gops
                ),
            };
        }
        let mean = errs.iter().map(|e| e.abs()).sum::<f64>() / errs.len() as f64;
        if a.format == Format::Table {
            let _ = writeln!(out, "mean absolute LUT error {:.2}%", mean * 100.0);
        }
        print!("{out}");
    }
    Ok(())
}

const KINDS: [CounterKind; 4] = [CounterKind::TwoFive, CounterKind::SixThree, CounterKind::FullAdder, CounterKind::Slice];

pub fn compressor(a: &CompressorArgs) -> Result<()> {
    if a.dk == 0 {
        return Err(Invalid("--dk must be at least 1".into()).into());
    }
    let plan = plan_for(a.dk);
    let hist = counter_stats(&plan);
    let reference = reference_counter_stats(a.dk);
    let mut man = Manifest::new("compressor");
    man.add("dk", a.dk);
    print!("{}", man.header());

    let ours = KINDS.map(|k| hist.get(&k).copied().unwrap_or(0));
    let refs: [Option<usize>; 4] = reference.unwrap_or([None; 4]);
    match a.format {
        Format::Csv => {
            println!("counter,ours,reference");
            for ((k, o), r) in KINDS.iter().zip(ours).zip(refs) {
                println!("{},{o},{}", k.label(), r.map_or(String::new(), |r| r.to_string()));
            }
            println!("stages,{},", plan.stage_count());
            println!("pipeline_depth,{},", pipeline_depth(a.dk));
            println!("estimated_luts,{},", estimated_luts(&plan, a.dk));
        }
        Format::Table => {
            print!("{}", render_plan(&plan, a.dk));
            println!("compression stages  {}", plan.stage_count());
            println!("pipeline depth      {}", pipeline_depth(a.dk));
            println!("estimated LUTs      {}", estimated_luts(&plan, a.dk));
            if hist.is_empty() {
                println!("counters            none");
            }
            println!("{:<10} {:>6} {:>10} {:>6}", "counter", "ours", "reference", "delta");
            for ((k, o), r) in KINDS.iter().zip(ours).zip(refs) {
                let (r_txt, d_txt) = match r {
                    Some(r) => (r.to_string(), format!("{:+}", o as i64 - r as i64)),
                    None => ("-".to_string(), "-".to_string()),
                };
                println!("{:<10} {o:>6} {r_txt:>10} {d_txt:>6}", k.label());
            }
            if reference.is_some() {
                println!("reference column (3:1] is compared against full adders (3:2)");
            }
        }
    }
    Ok(())
}
