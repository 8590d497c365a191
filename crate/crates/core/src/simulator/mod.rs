//! Functional and cycle-approximate model of the overlay.
//!
//! The fetch, execute and result stages run their queues in order and only
//! interact through bounded token FIFOs, the matrix buffers and the result
//! buffer. A deterministic event loop always advances the runnable stage with
//! the smallest local time (fetch, execute, result on ties), so every run of
//! the same program produces the same memory image and the same report.
//!
//! Cycle costs per instruction:
//!
//! | instruction | cycles |
//! |---|---|
//! | RunFetch | `dma_latency + ceil(8 * bytes / F)` |
//! | RunExecute | `dot_length + d_pipe` |
//! | RunResult | `dma_latency + ceil(Dm * Dn * A / R)` |
//! | RunP2S | `ceil(8 * src_bytes / F) + rows * ceil(cols / R) * precision` |
//! | Wait, Signal | 0, plus any blocking time |
//!
//! The execute stage latches its accumulators into result slot
//! `k mod Br` when it signals the result stage for the `k`-th time, and the
//! `k`-th RunResult drains slot `k mod Br`.

mod config;
mod memory;

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

pub use config::{default_d_pipe, ConfigError, HwConfig, EXECUTE_OVERHEAD};
pub use memory::MemModel;

use crate::bitmatrix::{pack_planes, BitParallelMatrix};
use crate::isa::{check_instruction, ExecOp, FetchOp, Instruction, P2sOp, Program, Queue, ResultOp, Stage};
use crate::refgemm::fits_accumulator;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockedStage {
    pub stage: Stage,
    pub index: usize,
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("{queue} queue instruction #{index}: {message}")]
    Structural {
        queue: Queue,
        index: usize,
        message: String,
    },
    #[error("deadlock: {}", describe_blocked(.blocked))]
    Deadlock { blocked: Vec<BlockedStage> },
    #[error("memory access of {len} bytes at {addr:#x} is outside the {size}-byte memory")]
    MemoryOutOfBounds { addr: u64, len: usize, size: usize },
    #[error("accumulator overflow in DPU ({row}, {col}) at execute instruction #{index}: {value} does not fit {acc_bits} bits")]
    Overflow {
        index: usize,
        row: usize,
        col: usize,
        value: i128,
        acc_bits: u32,
    },
}

fn describe_blocked(blocked: &[BlockedStage]) -> String {
    blocked
        .iter()
        .map(|b| format!("{} blocked at #{} ({})", b.stage, b.index, b.instruction))
        .collect::<Vec<_>>()
        .join(", ")
}

impl SimError {
    /// Errors caused by the shape of the program rather than by its dynamics.
    pub fn is_structural(&self) -> bool {
        matches!(self, SimError::Structural { .. } | SimError::Config(_))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageStats {
    pub busy: u64,
    pub stall: u64,
    pub instructions: u64,
}

/// One occupancy interval of a stage, for timelines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub queue: Queue,
    pub index: usize,
    pub label: String,
    pub start: u64,
    pub end: u64,
    pub busy: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimReport {
    pub cycles_total: u64,
    pub fetch: StageStats,
    pub execute: StageStats,
    pub result: StageStats,
    pub p2s_cycles: u64,
    /// Binary operations performed by the DPU array, padding included.
    pub binary_ops: u64,
    pub dot_words: u64,
    pub gops: f64,
    pub efficiency: f64,
    pub bytes_fetched: u64,
    pub packets: u64,
    pub buffer_writes: u64,
    pub bytes_written: u64,
    pub unwritten_reads: u64,
    pub hazards: Vec<String>,
    pub events: Vec<TraceEvent>,
}

impl SimReport {
    pub fn stage(&self, s: Stage) -> &StageStats {
        match s {
            Stage::Fetch => &self.fetch,
            Stage::Execute => &self.execute,
            Stage::Result => &self.result,
        }
    }

    fn stage_mut(&mut self, s: Stage) -> &mut StageStats {
        match s {
            Stage::Fetch => &mut self.fetch,
            Stage::Execute => &mut self.execute,
            Stage::Result => &mut self.result,
        }
    }

    /// Report as `key=value` lines.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "cycles_total={}", self.cycles_total);
        for st in Stage::ALL {
            let v = self.stage(st);
            let _ = writeln!(s, "{st}_busy={}", v.busy);
            let _ = writeln!(s, "{st}_stall={}", v.stall);
            let _ = writeln!(s, "{st}_instructions={}", v.instructions);
        }
        let _ = writeln!(s, "p2s_cycles={}", self.p2s_cycles);
        let _ = writeln!(s, "binary_ops={}", self.binary_ops);
        let _ = writeln!(s, "dot_words={}", self.dot_words);
        let _ = writeln!(s, "gops={:.4}", self.gops);
        let _ = writeln!(s, "efficiency={:.6}", self.efficiency);
        let _ = writeln!(s, "bytes_fetched={}", self.bytes_fetched);
        let _ = writeln!(s, "packets={}", self.packets);
        let _ = writeln!(s, "buffer_writes={}", self.buffer_writes);
        let _ = writeln!(s, "bytes_written={}", self.bytes_written);
        let _ = writeln!(s, "unwritten_reads={}", self.unwritten_reads);
        let _ = writeln!(s, "hazards={}", self.hazards.len());
        s
    }

    /// Occupancy intervals as CSV: `stage,index,instruction,start,end,kind`.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("stage,index,instruction,start,end,kind\n");
        for e in &self.events {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                e.queue,
                e.index,
                e.label,
                e.start,
                e.end,
                if e.busy { "busy" } else { "stall" }
            );
        }
        s
    }

    /// Text timeline with one lane per stage, `width` characters wide.
    pub fn timeline(&self, width: usize) -> String {
        let width = width.max(10);
        let total = self.cycles_total.max(1);
        let mut out = String::new();
        for q in [Queue::P2s, Queue::Fetch, Queue::Execute, Queue::Result] {
            let mut lane = vec![b'.'; width];
            for e in self.events.iter().filter(|e| e.queue == q && e.end > e.start) {
                let a = (e.start * width as u64 / total) as usize;
                let b = ((e.end * width as u64).div_ceil(total) as usize).clamp(a + 1, width);
                let mark = if e.busy { b'#' } else { b'-' };
                for c in &mut lane[a.min(width - 1)..b] {
                    if *c != b'#' {
                        *c = mark;
                    }
                }
            }
            let _ = writeln!(out, "{:>8} |{}|", q.to_string(), String::from_utf8_lossy(&lane));
        }
        let _ = writeln!(out, "{:>8}  0{:>w$}", "cycles", self.cycles_total, w = width - 1);
        out
    }
}

/// Cycles of one RunFetch.
pub fn fetch_cycles(f: &FetchOp, cfg: &HwConfig) -> u64 {
    cfg.dma_latency.saturating_add(f.total_bytes().saturating_mul(8).div_ceil(cfg.read_bus_bits as u64))
}

/// Cycles of one RunResult.
pub fn result_cycles(cfg: &HwConfig) -> u64 {
    cfg.dma_latency + ((cfg.dm * cfg.dn) as u64 * cfg.acc_bits as u64).div_ceil(cfg.write_bus_bits as u64)
}

/// Cycles of one RunP2S.
pub fn p2s_cycles(op: &P2sOp, cfg: &HwConfig) -> u64 {
    let src_bytes = op.rows.saturating_mul(op.cols).saturating_mul(u64::from(cfg.max_precision.div_ceil(8)));
    let words_per_row = op.cols.div_ceil(cfg.write_bus_bits as u64);
    src_bytes
        .saturating_mul(8)
        .div_ceil(cfg.read_bus_bits as u64)
        .saturating_add(op.rows.saturating_mul(words_per_row).saturating_mul(op.precision))
}

/// Convert a bit-parallel matrix in memory to the bit-serial layout and
/// return the modelled cycle count.
pub fn run_p2s(op: &P2sOp, mem: &mut MemModel, cfg: &HwConfig) -> Result<u64, SimError> {
    if let Some(message) = check_instruction(&Instruction::RunP2S(*op), Queue::P2s, cfg) {
        return Err(SimError::Structural {
            queue: Queue::P2s,
            index: 0,
            message,
        });
    }
    let eb = cfg.max_precision.div_ceil(8) as usize;
    let (rows, cols) = (op.rows as usize, op.cols as usize);
    let src = mem.read(op.src_base, rows.saturating_mul(cols).saturating_mul(eb))?.to_vec();
    let bits = op.precision as u32;
    let mask = if bits >= 64 { u64::MAX } else { (1u64 << bits) - 1 };
    let elems: Vec<i64> = src
        .chunks(eb)
        .map(|c| {
            let mut b = [0u8; 8];
            b[..c.len()].copy_from_slice(c);
            (u64::from_le_bytes(b) & mask) as i64
        })
        .collect();
    let m = BitParallelMatrix::new(rows, cols, bits, bits == 64, elems).expect("masked values fit the precision");
    mem.write(op.dst_base, &pack_planes(&m, cfg.write_bus_bits))?;
    Ok(p2s_cycles(op, cfg))
}

/// Execute-stage efficiency of a single dot product over `k` columns.
pub fn efficiency_curve(cfg: &HwConfig, ks: &[u64]) -> Vec<(u64, f64)> {
    ks.iter()
        .map(|&k| {
            let n = k.div_ceil(cfg.dk as u64) as f64;
            (k, n / (n + cfg.d_pipe as f64))
        })
        .collect()
}

struct Fifo {
    tokens: VecDeque<u64>,
    pushes: usize,
    pop_times: Vec<u64>,
}

struct Engine<'a> {
    cfg: &'a HwConfig,
    mem: MemModel,
    words_per_entry: usize,
    buffers: Vec<Vec<u64>>,
    read_end: Vec<Vec<u64>>,
    write_end: Vec<Vec<u64>>,
    acc: Vec<i128>,
    slots: Vec<Vec<i128>>,
    slot_drain_end: Vec<u64>,
    commits: usize,
    drains: usize,
    report: SimReport,
}

const MAX_HAZARD_MESSAGES: usize = 32;

impl<'a> Engine<'a> {
    fn new(cfg: &'a HwConfig, mem: MemModel) -> Self {
        let wpe = cfg.dk.div_ceil(64);
        let depths: Vec<usize> = (0..cfg.buffer_count()).map(|b| cfg.buffer_depth(b)).collect();
        Self {
            cfg,
            mem,
            words_per_entry: wpe,
            buffers: depths.iter().map(|&d| vec![0; d * wpe]).collect(),
            read_end: depths.iter().map(|&d| vec![0; d]).collect(),
            write_end: depths.iter().map(|&d| vec![0; d]).collect(),
            acc: vec![0; cfg.dm * cfg.dn],
            slots: vec![vec![0; cfg.dm * cfg.dn]; cfg.br],
            slot_drain_end: vec![0; cfg.br],
            commits: 0,
            drains: 0,
            report: SimReport::default(),
        }
    }

    fn hazard(&mut self, msg: String) {
        if self.report.hazards.len() < MAX_HAZARD_MESSAGES {
            self.report.hazards.push(msg);
        } else if self.report.hazards.len() == MAX_HAZARD_MESSAGES {
            self.report.hazards.push("further hazards suppressed".into());
        }
    }

    fn fetch(&mut self, f: &FetchOp, start: u64, end: u64) -> Result<(), SimError> {
        let wb = self.cfg.word_bytes();
        let mut stream = Vec::with_capacity(f.total_bytes() as usize);
        for blk in 0..f.block_count {
            let addr = blk.saturating_mul(f.block_offset_bytes).saturating_add(f.dram_base);
            stream.extend_from_slice(self.mem.read(addr, f.block_size_bytes as usize)?);
        }
        for (q, word) in stream.chunks(wb).enumerate() {
            let (buf, off) = f.destination(q as u64);
            let (buf, off) = (buf as usize, off as usize);
            if self.read_end[buf][off] > start {
                self.hazard(format!(
                    "buffer {buf} word {off} overwritten at cycle {start} while read until {}",
                    self.read_end[buf][off]
                ));
            }
            let entry = &mut self.buffers[buf][off * self.words_per_entry..(off + 1) * self.words_per_entry];
            entry.fill(0);
            for (j, byte) in word.iter().enumerate() {
                entry[j / 8] |= (*byte as u64) << (8 * (j % 8));
            }
            self.write_end[buf][off] = end;
        }
        let words = stream.len() / wb;
        self.report.bytes_fetched += stream.len() as u64;
        self.report.packets += words as u64;
        self.report.buffer_writes += words as u64;
        Ok(())
    }

    fn check_reads(&mut self, buf: usize, lo: usize, len: usize, start: u64, end: u64) {
        for off in lo..lo + len {
            if self.write_end[buf][off] > start {
                self.hazard(format!(
                    "buffer {buf} word {off} read at cycle {start} before its fetch completes at {}",
                    self.write_end[buf][off]
                ));
            }
            self.read_end[buf][off] = self.read_end[buf][off].max(end);
        }
    }

    fn execute(&mut self, index: usize, e: &ExecOp, start: u64, end: u64) -> Result<(), SimError> {
        let (dm, dn, wpe) = (self.cfg.dm, self.cfg.dn, self.words_per_entry);
        let (lo, ro, len) = (e.lhs_offset as usize, e.rhs_offset as usize, e.dot_length as usize);
        for m in 0..dm {
            self.check_reads(m, lo, len, start, end);
        }
        for n in 0..dn {
            self.check_reads(dm + n, ro, len, start, end);
        }
        for m in 0..dm {
            let a = &self.buffers[m][lo * wpe..(lo + len) * wpe];
            for n in 0..dn {
                let b = &self.buffers[dm + n][ro * wpe..(ro + len) * wpe];
                let pc: i128 = a.iter().zip(b).map(|(x, y)| (x & y).count_ones() as i128).sum();
                let cell = &mut self.acc[m * dn + n];
                let v = e.acc_mode.apply(*cell) + if e.negate { -pc } else { pc };
                if !fits_accumulator(v, self.cfg.acc_bits) {
                    return Err(SimError::Overflow {
                        index,
                        row: m,
                        col: n,
                        value: v,
                        acc_bits: self.cfg.acc_bits,
                    });
                }
                *cell = v;
            }
        }
        self.report.dot_words += e.dot_length;
        self.report.binary_ops += 2 * (dm * dn * self.cfg.dk) as u64 * e.dot_length;
        Ok(())
    }

    fn commit(&mut self, t: u64) {
        let slot = self.commits % self.cfg.br;
        if self.slot_drain_end[slot] > t {
            self.hazard(format!(
                "result slot {slot} overwritten at cycle {t} while drained until {}",
                self.slot_drain_end[slot]
            ));
        }
        self.slots[slot].copy_from_slice(&self.acc);
        self.commits += 1;
    }

    fn drain(&mut self, r: &ResultOp, end: u64) -> Result<(), SimError> {
        let slot = self.drains % self.cfg.br;
        if self.drains >= self.commits {
            self.hazard(format!("result slot {slot} drained before any commit"));
        }
        let eb = self.cfg.acc_bits as usize / 8;
        let mut bytes = Vec::with_capacity(self.slots[slot].len() * eb);
        for &v in &self.slots[slot] {
            bytes.extend_from_slice(&(v as i64).to_le_bytes()[..eb]);
        }
        self.mem.write(r.address(), &bytes)?;
        self.report.bytes_written += bytes.len() as u64;
        self.slot_drain_end[slot] = end;
        self.drains += 1;
        Ok(())
    }
}

/// Run a program and report memory contents only.
pub fn run_functional(p: &Program, mem: MemModel, cfg: &HwConfig) -> Result<MemModel, SimError> {
    run_timed(p, mem, cfg).map(|(m, _)| m)
}

/// Run a program with cycle accounting.
pub fn run_timed(p: &Program, mem: MemModel, cfg: &HwConfig) -> Result<(MemModel, SimReport), SimError> {
    cfg.validate()?;
    let mut eng = Engine::new(cfg, mem);

    let mut now = 0u64;
    for (i, ins) in p.p2s.iter().enumerate() {
        if let Some(message) = check_instruction(ins, Queue::P2s, cfg) {
            return Err(SimError::Structural {
                queue: Queue::P2s,
                index: i,
                message,
            });
        }
        if let Instruction::RunP2S(op) = ins {
            let c = run_p2s(op, &mut eng.mem, cfg)?;
            eng.report.events.push(TraceEvent {
                queue: Queue::P2s,
                index: i,
                label: ins.mnemonic(),
                start: now,
                end: now + c,
                busy: true,
            });
            now += c;
        }
    }
    eng.report.p2s_cycles = now;

    let queues = [&p.fetch[..], &p.execute[..], &p.result[..]];
    let mut pc = [0usize; 3];
    let mut t = [now; 3];
    let mut fifos: BTreeMap<(Stage, Stage), Fifo> = BTreeMap::new();
    for a in Stage::ALL {
        for b in Stage::ALL {
            if a.is_peer(b) {
                fifos.insert(
                    (a, b),
                    Fifo {
                        tokens: VecDeque::new(),
                        pushes: 0,
                        pop_times: Vec::new(),
                    },
                );
            }
        }
    }

    loop {
        let mut pick: Option<usize> = None;
        let mut unfinished = false;
        for (s, stage) in Stage::ALL.iter().enumerate() {
            let Some(ins) = queues[s].get(pc[s]) else {
                continue;
            };
            unfinished = true;
            if let Some(message) = check_instruction(ins, stage.queue(), cfg) {
                return Err(SimError::Structural {
                    queue: stage.queue(),
                    index: pc[s],
                    message,
                });
            }
            let ready = match *ins {
                Instruction::Wait { stage, fifo } => !fifos[&(fifo, stage)].tokens.is_empty(),
                Instruction::Signal { stage, fifo } => fifos[&(stage, fifo)].tokens.len() < cfg.fifo_capacity,
                _ => true,
            };
            if ready && pick.is_none_or(|b| t[s] < t[b]) {
                pick = Some(s);
            }
        }
        let Some(s) = pick else {
            if !unfinished {
                break;
            }
            let blocked = Stage::ALL
                .iter()
                .enumerate()
                .filter_map(|(i, &stage)| {
                    queues[i].get(pc[i]).map(|ins| BlockedStage {
                        stage,
                        index: pc[i],
                        instruction: ins.mnemonic(),
                    })
                })
                .collect();
            return Err(SimError::Deadlock { blocked });
        };

        let stage = Stage::ALL[s];
        let index = pc[s];
        let ins = queues[s][index];
        let t0 = t[s];
        let (start, end) = match ins {
            Instruction::Wait { stage, fifo } => {
                let f = fifos.get_mut(&(fifo, stage)).expect("legal fifo");
                let ts = f.tokens.pop_front().expect("runnable wait has a token");
                let start = t0.max(ts);
                f.pop_times.push(start);
                (start, start)
            }
            Instruction::Signal { stage, fifo } => {
                let f = fifos.get_mut(&(stage, fifo)).expect("legal fifo");
                let start = match f.pushes.checked_sub(cfg.fifo_capacity) {
                    Some(k) => t0.max(f.pop_times[k]),
                    None => t0,
                };
                f.tokens.push_back(start);
                f.pushes += 1;
                if stage == Stage::Execute && fifo == Stage::Result {
                    eng.commit(start);
                }
                (start, start)
            }
            Instruction::RunFetch(f) => {
                let end = t0 + fetch_cycles(&f, cfg);
                eng.fetch(&f, t0, end)?;
                (t0, end)
            }
            Instruction::RunExecute(e) => {
                let next_is_exec = matches!(queues[s].get(index + 1), Some(Instruction::RunExecute(_)));
                let drain = if cfg.pipelined_execute && next_is_exec {
                    0
                } else {
                    cfg.d_pipe as u64
                };
                let end = t0 + e.dot_length + drain;
                eng.execute(index, &e, t0, end)?;
                (t0, end)
            }
            Instruction::RunResult(r) => {
                let end = t0 + result_cycles(cfg);
                eng.drain(&r, end)?;
                (t0, end)
            }
            Instruction::RunP2S(_) => unreachable!("p2s instructions are rejected outside the p2s queue"),
        };
        let stats = eng.report.stage_mut(stage);
        stats.instructions += 1;
        stats.stall += start - t0;
        stats.busy += end - start;
        if start > t0 {
            eng.report.events.push(TraceEvent {
                queue: stage.queue(),
                index,
                label: ins.mnemonic(),
                start: t0,
                end: start,
                busy: false,
            });
        }
        if end > start {
            eng.report.events.push(TraceEvent {
                queue: stage.queue(),
                index,
                label: ins.mnemonic(),
                start,
                end,
                busy: true,
            });
        }
        t[s] = end;
        pc[s] += 1;
    }

    let mut report = eng.report;
    report.cycles_total = t.iter().copied().max().unwrap_or(now);
    report.unwritten_reads = eng.mem.unwritten_reads();
    if report.cycles_total > 0 {
        let peak = 2.0 * (cfg.dm * cfg.dn * cfg.dk) as f64 * report.cycles_total as f64;
        report.efficiency = report.binary_ops as f64 / peak;
        report.gops = report.binary_ops as f64 / (report.cycles_total as f64 / cfg.f_clk_hz) / 1e9;
    }
    report.events.sort_by_key(|e| (e.start, stage_order(e.queue), e.index));
    Ok((eng.mem, report))
}

fn stage_order(q: Queue) -> u8 {
    match q {
        Queue::P2s => 0,
        Queue::Fetch => 1,
        Queue::Execute => 2,
        Queue::Result => 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitmatrix::{p2s_pack, LayoutParams};
    use crate::isa::{decode, AccMode};

    fn cfg() -> HwConfig {
        let mut c = HwConfig::new(2, 32, 2).with_buffers(4, 4);
        c.d_pipe = 5;
        c.dma_latency = 10;
        c
    }

    #[test]
    fn sync_only_program_leaves_memory() {
        let p = decode("F signal execute\nE wait fetch\nE signal fetch\nF wait execute\n").unwrap();
        let mem = MemModel::new(64);
        let (out, rep) = run_timed(&p, mem.clone(), &cfg()).unwrap();
        assert_eq!(out, mem);
        assert_eq!(rep.cycles_total, 0);
        assert_eq!(rep.fetch.instructions, 2);
    }

    #[test]
    fn single_execute_timing() {
        let c = cfg();
        for n in [1u64, 3, 4] {
            let p = decode(&format!("E run lhs_offset=0 rhs_offset=0 dot_length={n} negate=0 acc=zero")).unwrap();
            let (_, rep) = run_timed(&p, MemModel::new(0), &c).unwrap();
            assert_eq!(rep.execute.busy, n + c.d_pipe as u64);
            assert_eq!(rep.cycles_total, n + c.d_pipe as u64);
            assert_eq!(rep.binary_ops, 2 * 2 * 2 * 32 * n);
        }
    }

    #[test]
    fn deadlock_names_blocked_instructions() {
        let p = decode("F wait execute\nE run lhs_offset=0 rhs_offset=0 dot_length=1 negate=0 acc=zero\nE wait fetch\n").unwrap();
        match run_timed(&p, MemModel::new(0), &cfg()) {
            Err(SimError::Deadlock { blocked }) => {
                assert_eq!(blocked.len(), 2);
                assert_eq!((blocked[0].stage, blocked[0].index), (Stage::Fetch, 0));
                assert_eq!((blocked[1].stage, blocked[1].index), (Stage::Execute, 1));
            }
            other => panic!("expected deadlock, got {other:?}"),
        }
    }

    #[test]
    fn structural_errors_at_runtime() {
        let p = decode(
            "F run dram_base=0 block_size_bytes=4 block_offset_bytes=4 block_count=1 buf_offset=0 buf_start=9 buf_range=1 words_per_buffer=1",
        )
        .unwrap();
        let err = run_timed(&p, MemModel::new(64), &cfg()).unwrap_err();
        assert!(err.is_structural());
        let mut bad = Program::default();
        bad.fetch.push(Instruction::Signal {
            stage: Stage::Fetch,
            fifo: Stage::Result,
        });
        assert!(run_timed(&bad, MemModel::new(0), &cfg()).unwrap_err().is_structural());
    }

    #[test]
    fn memory_bounds_are_runtime_errors() {
        let p = decode(
            "F run dram_base=60 block_size_bytes=8 block_offset_bytes=8 block_count=1 buf_offset=0 buf_start=0 buf_range=2 words_per_buffer=1",
        )
        .unwrap();
        let err = run_timed(&p, MemModel::new(64), &cfg()).unwrap_err();
        assert!(matches!(err, SimError::MemoryOutOfBounds { .. }));
        assert!(!err.is_structural());
    }

    // One fetch of a word per buffer, one execute and one result drain.
    fn tiny_program(acc: AccMode) -> String {
        format!(
            "F run dram_base=0 block_size_bytes=16 block_offset_bytes=16 block_count=1 buf_offset=0 buf_start=0 buf_range=4 words_per_buffer=1\n\
             F signal execute\n\
             E wait fetch\n\
             E run lhs_offset=0 rhs_offset=0 dot_length=1 negate=0 acc={acc}\n\
             E signal result\n\
             R wait execute\n\
             R run dram_base=64 offset=0\n"
        )
    }

    #[test]
    fn functional_dot_products_and_timing() {
        let c = cfg();
        let mut mem = MemModel::new(128);
        // lhs rows 0b1111 and 0b1, rhs columns 0b11 and 0xff.
        mem.write(0, &[0x0f, 0, 0, 0, 0x01, 0, 0, 0, 0x03, 0, 0, 0, 0xff, 0, 0, 0]).unwrap();
        let p = decode(&tiny_program(AccMode::Zero)).unwrap();
        let (out, rep) = run_timed(&p, mem, &c).unwrap();
        let vals: Vec<i32> = out.peek(64, 16).unwrap().chunks(4).map(|b| i32::from_le_bytes(b.try_into().unwrap())).collect();
        assert_eq!(vals, vec![2, 4, 1, 1]);
        let fetch = 10 + 16 * 8 / 64;
        let exec = 1 + 5;
        let result = 10 + (4 * 32u64).div_ceil(64);
        assert_eq!(rep.cycles_total, fetch + exec + result);
        assert_eq!(rep.bytes_fetched, 16);
        assert_eq!(rep.packets, rep.buffer_writes);
        assert!(rep.hazards.is_empty());
        assert_eq!(rep.bytes_written, 16);
        assert!(rep.cycles_total >= rep.fetch.busy.max(rep.execute.busy).max(rep.result.busy));
        assert!(rep.cycles_total <= rep.fetch.busy + rep.execute.busy + rep.result.busy);
        assert_eq!(run_functional(&p, MemModel::new(128), &c).unwrap().peek(64, 16).unwrap(), &[0u8; 16]);
    }

    #[test]
    fn missing_sync_is_a_hazard() {
        let c = cfg();
        let racy = tiny_program(AccMode::Zero).replace("F signal execute\n", "").replace("E wait fetch\n", "");
        let (_, rep) = run_timed(&decode(&racy).unwrap(), MemModel::new(128), &c).unwrap();
        assert!(!rep.hazards.is_empty());
    }

    #[test]
    fn overflow_detected() {
        let mut c = cfg();
        c.acc_bits = 8;
        let mut mem = MemModel::new(128);
        mem.write(0, &[0xff; 16]).unwrap();
        let text = tiny_program(AccMode::Zero).replace("E signal result\n", "")
            + &"E run lhs_offset=0 rhs_offset=0 dot_length=1 negate=0 acc=shl1\n".repeat(3);
        let text = text.replace("R wait execute\nR run dram_base=64 offset=0\n", "");
        let err = run_timed(&decode(&text).unwrap(), mem, &c).unwrap_err();
        assert!(matches!(err, SimError::Overflow { index: 3, .. }), "{err:?}");
    }

    #[test]
    fn bounded_fifo_blocks_producer() {
        let mut c = cfg();
        c.fifo_capacity = 1;
        let p = decode(
            "F signal execute\nF signal execute\n\
             E run lhs_offset=0 rhs_offset=0 dot_length=4 negate=0 acc=zero\nE wait fetch\nE wait fetch\n",
        )
        .unwrap();
        let (_, rep) = run_timed(&p, MemModel::new(0), &c).unwrap();
        assert_eq!(rep.fetch.stall, 9);
    }

    #[test]
    fn pipelined_execute_pays_drain_once() {
        let mut c = cfg();
        let text = "E run lhs_offset=0 rhs_offset=0 dot_length=2 negate=0 acc=zero\n".repeat(3);
        let p = decode(&text).unwrap();
        assert_eq!(run_timed(&p, MemModel::new(0), &c).unwrap().1.cycles_total, 3 * (2 + 5));
        c.pipelined_execute = true;
        assert_eq!(run_timed(&p, MemModel::new(0), &c).unwrap().1.cycles_total, 3 * 2 + 5);
    }

    #[test]
    fn p2s_matches_reference_layout() {
        let c = cfg();
        let elems: Vec<i64> = (0..128).map(|i| (i * 5 % 16) as i64).collect();
        let m = BitParallelMatrix::new(2, 64, 4, false, elems.clone()).unwrap();
        let mut mem = MemModel::new(512);
        let src: Vec<u8> = elems.iter().map(|&v| v as u8).collect();
        mem.write(0, &src).unwrap();
        let op = P2sOp {
            src_base: 0,
            dst_base: 256,
            rows: 2,
            cols: 64,
            precision: 4,
        };
        let cycles = run_p2s(&op, &mut mem, &c).unwrap();
        let want = p2s_pack(&m, &LayoutParams::default()).unwrap();
        assert_eq!(mem.peek(256, want.len()).unwrap(), &want[..]);
        assert_eq!(cycles, 128 * 8 / 64 + 2 * 4);
        let one = P2sOp {
            src_base: 0,
            dst_base: 256,
            rows: 1,
            cols: 64,
            precision: 1,
        };
        assert_eq!(run_p2s(&one, &mut mem, &c).unwrap(), 8 + 1);
        let bad = P2sOp { precision: 9, ..one };
        assert!(run_p2s(&bad, &mut mem, &c).unwrap_err().is_structural());
    }

    #[test]
    fn p2s_queue_runs_first() {
        let c = cfg();
        let mut mem = MemModel::new(512);
        mem.write(0, &[1u8; 64]).unwrap();
        let p = decode("P run src_base=0 dst_base=256 rows=1 cols=64 precision=1\nE run lhs_offset=0 rhs_offset=0 dot_length=1 negate=0 acc=zero\n").unwrap();
        let (out, rep) = run_timed(&p, mem, &c).unwrap();
        assert_eq!(rep.p2s_cycles, 9);
        assert_eq!(rep.cycles_total, 9 + 6);
        assert_eq!(out.peek(256, 8).unwrap(), &[0xff; 8]);
        assert!(rep.timeline(40).contains("execute"));
        assert!(rep.trace_csv().lines().count() >= 3);
    }

    #[test]
    fn efficiency_curve_shape() {
        let mut c = HwConfig::new(8, 256, 8);
        c.d_pipe = 15;
        let pts = efficiency_curve(&c, &[256, 8192, 1 << 30]);
        assert!((pts[0].1 - 1.0 / 16.0).abs() < 1e-12);
        assert!((pts[1].1 - 32.0 / 47.0).abs() < 1e-12);
        assert!(pts[2].1 > 0.9999);
    }

    #[test]
    fn report_is_deterministic() {
        let c = cfg();
        let p = decode(&tiny_program(AccMode::Zero)).unwrap();
        let a = run_timed(&p, MemModel::new(128), &c).unwrap();
        let b = run_timed(&p, MemModel::new(128), &c).unwrap();
        assert_eq!(a.1.to_kv(), b.1.to_kv());
        assert_eq!(a.0, b.0);
    }
}
