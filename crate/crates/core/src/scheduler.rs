//! Instruction program generation for blocked bit-serial matrix products.
//!
//! Operands live in memory in the bit-serial layout: every bit plane of the
//! left-hand matrix (M x K) is stored row by row with rows padded to a
//! multiple of `Dk` bits, and the right-hand matrix is stored transposed
//! (N x K) the same way. Rows are zero-padded to multiples of `Dm` and `Dn`.
//! The product is written tile by tile: tile `(mb, nb)` holds `Dm x Dn`
//! little-endian accumulator values in row-major order at
//! `result_base + (mb * NB + nb) * tile_bytes`.
//!
//! Each result tile runs the wavefront plane order, and every plane product
//! is split into chunks of at most `kc` words that fit the matrix buffers.
//! Buffer space is managed in slots of `kc` words per side, refilled with
//! furthest-next-use replacement.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::bitmatrix::{pack_planes, BitMatrixError, BitParallelMatrix};
use crate::isa::{AccMode, ExecOp, FetchOp, Instruction, Program, Queue, ResultOp, Stage};
use crate::refgemm::{wavefront_schedule, AccumMatrix, GemmError};
use crate::simulator::{run_timed, ConfigError, HwConfig, MemModel, SimError, SimReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("tile does not fit buffers: {dimension} holds {available} words but a chunk needs {needed}")]
    Capacity {
        dimension: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("inner dimensions differ: lhs has {lhs} columns, rhs has {rhs}")]
    DimensionMismatch { lhs: usize, rhs: usize },
    #[error("invalid operand descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
}

/// Location and shape of one bit-serial operand in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixDesc {
    pub base: u64,
    pub rows: usize,
    pub cols: usize,
    pub bits: u32,
    pub signed: bool,
}

impl MatrixDesc {
    pub fn padded_rows(&self, block: usize) -> usize {
        self.rows.div_ceil(block) * block
    }

    pub fn padded_cols(&self, dk: usize) -> usize {
        self.cols.div_ceil(dk) * dk
    }

    pub fn row_bytes(&self, dk: usize) -> usize {
        self.padded_cols(dk) / 8
    }

    pub fn plane_bytes(&self, block: usize, dk: usize) -> usize {
        self.padded_rows(block) * self.row_bytes(dk)
    }

    pub fn footprint(&self, block: usize, dk: usize) -> usize {
        self.bits as usize * self.plane_bytes(block, dk)
    }
}

/// A full product: `lhs` is M x K, `rhs` is the transposed N x K operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GemmProblem {
    pub lhs: MatrixDesc,
    pub rhs: MatrixDesc,
    pub result_base: u64,
}

impl GemmProblem {
    pub fn m(&self) -> usize {
        self.lhs.rows
    }

    pub fn k(&self) -> usize {
        self.lhs.cols
    }

    pub fn n(&self) -> usize {
        self.rhs.rows
    }

    /// Result tile grid `(MB, NB)`.
    pub fn tile_grid(&self, cfg: &HwConfig) -> (usize, usize) {
        (self.m().div_ceil(cfg.dm), self.n().div_ceil(cfg.dn))
    }

    pub fn result_bytes(&self, cfg: &HwConfig) -> usize {
        let (mb, nb) = self.tile_grid(cfg);
        mb * nb * cfg.result_tile_bytes()
    }

    fn check(&self) -> Result<(), ScheduleError> {
        if self.lhs.cols != self.rhs.cols {
            return Err(ScheduleError::DimensionMismatch {
                lhs: self.lhs.cols,
                rhs: self.rhs.cols,
            });
        }
        for (name, d) in [("lhs", &self.lhs), ("rhs", &self.rhs)] {
            if d.rows == 0 || d.cols == 0 {
                return Err(ScheduleError::InvalidDescriptor(format!("{name} is empty")));
            }
            if !(1..=64).contains(&d.bits) {
                return Err(ScheduleError::InvalidDescriptor(format!("{name} has {} bits", d.bits)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScheduleOptions {
    /// Overlap fetch, execute and result across tiles.
    pub overlap: bool,
    /// Force the chunk length in words instead of deriving it from the
    /// buffer depths.
    pub chunk_words: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Lhs,
    Rhs,
}

/// One buffer refill: a chunk of one plane of one row block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Item {
    pub side: Side,
    pub plane: u32,
    pub block: usize,
    pub chunk: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannedLoad {
    pub item: Item,
    pub slot: usize,
    /// First execute that reads the loaded words.
    pub need: usize,
    /// Last execute that read the evicted occupant of the slot.
    pub evicts_after: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannedExec {
    pub tile: usize,
    pub lhs: Item,
    pub rhs: Item,
    pub lhs_slot: usize,
    pub rhs_slot: usize,
    pub len: usize,
    pub negate: bool,
    pub acc_mode: AccMode,
}

/// Tiling, chunking and buffer assignment of one product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePlan {
    pub grid: (usize, usize),
    /// Tiles in execution order as `(mb, nb)`.
    pub tiles: Vec<(usize, usize)>,
    pub words: usize,
    pub chunk_words: usize,
    pub chunks: usize,
    pub slots: (usize, usize),
    pub execs: Vec<PlannedExec>,
    pub loads: Vec<PlannedLoad>,
}

impl TilePlan {
    fn chunk_len(&self, chunk: usize) -> usize {
        (self.words - chunk * self.chunk_words).min(self.chunk_words)
    }

    /// Index of the last execute of every tile.
    pub fn tile_ends(&self) -> Vec<usize> {
        let mut ends = vec![0; self.tiles.len()];
        for (e, x) in self.execs.iter().enumerate() {
            ends[x.tile] = e;
        }
        ends
    }
}

fn chunk_words(words: usize, l: u32, r: u32, cfg: &HwConfig, forced: Option<usize>) -> Result<usize, ScheduleError> {
    if let Some(kc) = forced {
        if kc == 0 {
            return Err(ScheduleError::InvalidDescriptor("chunk length must be positive".into()));
        }
        for (dimension, available) in [("bm", cfg.bm), ("bn", cfg.bn)] {
            if kc > available {
                return Err(ScheduleError::Capacity {
                    dimension,
                    needed: kc,
                    available,
                });
            }
        }
        return Ok(kc.min(words));
    }
    if l as usize * words <= cfg.bm && r as usize * words <= cfg.bn {
        Ok(words)
    } else {
        Ok(words.min((cfg.bm.min(cfg.bn) / 2).max(1)))
    }
}

/// Tile the product and assign buffer slots.
pub fn plan(problem: &GemmProblem, cfg: &HwConfig, opts: &ScheduleOptions) -> Result<TilePlan, ScheduleError> {
    cfg.validate()?;
    problem.check()?;
    let (l, r) = (problem.lhs.bits, problem.rhs.bits);
    let words = problem.lhs.padded_cols(cfg.dk) / cfg.dk;
    let kc = chunk_words(words, l, r, cfg, opts.chunk_words)?;
    let chunks = words.div_ceil(kc);
    let slots = (cfg.bm / kc, cfg.bn / kc);
    let grid = problem.tile_grid(cfg);

    // Columns of tiles sharing right-hand data are processed together so
    // that the right-hand chunks stay resident across row blocks. Only half
    // of the slots hold a group, leaving the other half free for the next
    // group's data.
    let group = (slots.1 / (2 * r as usize * chunks)).max(1);
    let mut tiles = Vec::with_capacity(grid.0 * grid.1);
    for g in (0..grid.1).step_by(group) {
        for mb in 0..grid.0 {
            for nb in g..(g + group).min(grid.1) {
                tiles.push((mb, nb));
            }
        }
    }

    let steps = wavefront_schedule(l, r, problem.lhs.signed, problem.rhs.signed);
    let mut execs = Vec::with_capacity(tiles.len() * steps.len() * chunks);
    for (t, &(mb, nb)) in tiles.iter().enumerate() {
        for step in &steps {
            for c in 0..chunks {
                let acc_mode = match (step.acc_mode, c) {
                    (AccMode::Keep, _) | (_, 1..) => AccMode::Keep,
                    (mode, 0) => mode,
                };
                execs.push(PlannedExec {
                    tile: t,
                    lhs: Item {
                        side: Side::Lhs,
                        plane: step.l_bit,
                        block: mb,
                        chunk: c,
                    },
                    rhs: Item {
                        side: Side::Rhs,
                        plane: step.r_bit,
                        block: nb,
                        chunk: c,
                    },
                    lhs_slot: 0,
                    rhs_slot: 0,
                    len: 0,
                    negate: step.negate,
                    acc_mode,
                });
            }
        }
    }

    let mut plan = TilePlan {
        grid,
        tiles,
        words,
        chunk_words: kc,
        chunks,
        slots,
        execs,
        loads: Vec::new(),
    };
    for e in 0..plan.execs.len() {
        plan.execs[e].len = plan.chunk_len(plan.execs[e].lhs.chunk);
    }

    // Slots read during the last two rows of a group are only evicted as a
    // last resort so that refills rarely wait on the execute stage.
    let lead = 2 * group * steps.len() * chunks;
    let mut lhs = SlotAllocator::new(slots.0, lead, plan.execs.iter().map(|x| x.lhs));
    let mut rhs = SlotAllocator::new(slots.1, lead, plan.execs.iter().map(|x| x.rhs));
    for e in 0..plan.execs.len() {
        let (li, ri) = (plan.execs[e].lhs, plan.execs[e].rhs);
        let (ls, lload) = lhs.access(e, li);
        let (rs, rload) = rhs.access(e, ri);
        plan.execs[e].lhs_slot = ls;
        plan.execs[e].rhs_slot = rs;
        plan.loads.extend(lload);
        plan.loads.extend(rload);
    }
    Ok(plan)
}

struct SlotAllocator {
    lead: usize,
    occupant: Vec<Option<Item>>,
    last_use: Vec<usize>,
    resident: HashMap<Item, usize>,
    uses: HashMap<Item, Vec<usize>>,
}

impl SlotAllocator {
    fn new(slots: usize, lead: usize, sequence: impl Iterator<Item = Item>) -> Self {
        let mut uses: HashMap<Item, Vec<usize>> = HashMap::new();
        for (e, it) in sequence.enumerate() {
            uses.entry(it).or_default().push(e);
        }
        Self {
            lead,
            occupant: vec![None; slots],
            last_use: vec![0; slots],
            resident: HashMap::new(),
            uses,
        }
    }

    fn next_use(&self, it: &Item, after: usize) -> usize {
        let u = &self.uses[it];
        let k = u.partition_point(|&x| x <= after);
        u.get(k).copied().unwrap_or(usize::MAX)
    }

    fn access(&mut self, e: usize, it: Item) -> (usize, Option<PlannedLoad>) {
        if let Some(&s) = self.resident.get(&it) {
            self.last_use[s] = e;
            return (s, None);
        }
        let slot = match self.occupant.iter().position(Option::is_none) {
            Some(s) => s,
            None => {
                // Furthest next use first, preferring slots idle for at
                // least `lead` executes.
                let mut best = 0;
                let mut best_key = (false, 0);
                for (s, occ) in self.occupant.iter().enumerate() {
                    let idle = self.last_use[s] + self.lead <= e;
                    let key = (idle, self.next_use(occ.as_ref().expect("all slots occupied"), e));
                    if key > best_key {
                        best = s;
                        best_key = key;
                    }
                }
                best
            }
        };
        let evicts_after = self.occupant[slot].map(|old| {
            self.resident.remove(&old);
            self.last_use[slot]
        });
        self.occupant[slot] = Some(it);
        self.resident.insert(it, slot);
        self.last_use[slot] = e;
        (
            slot,
            Some(PlannedLoad {
                item: it,
                slot,
                need: e,
                evicts_after,
            }),
        )
    }
}

struct Batch {
    need: usize,
    loads: Vec<PlannedLoad>,
    /// Execute whose completion the fetch stage waits for first.
    release: Option<usize>,
}

fn batches(plan: &TilePlan, overlap: bool) -> Vec<Batch> {
    let mut out: Vec<Batch> = Vec::new();
    for ld in &plan.loads {
        match out.last_mut() {
            Some(b) if b.need == ld.need => b.loads.push(*ld),
            _ => out.push(Batch {
                need: ld.need,
                loads: vec![*ld],
                release: None,
            }),
        }
    }
    let mut floor: Option<usize> = None;
    for b in &mut out {
        let own = if overlap {
            b.loads.iter().filter_map(|l| l.evicts_after).max()
        } else {
            b.need.checked_sub(1)
        };
        floor = floor.max(own);
        b.release = floor;
    }
    out
}

fn fetch_op(problem: &GemmProblem, plan: &TilePlan, cfg: &HwConfig, ld: &PlannedLoad) -> FetchOp {
    let (desc, block, buf_start) = match ld.item.side {
        Side::Lhs => (&problem.lhs, cfg.dm, 0),
        Side::Rhs => (&problem.rhs, cfg.dn, cfg.dm),
    };
    let word_bytes = cfg.word_bytes() as u64;
    let row_bytes = desc.row_bytes(cfg.dk) as u64;
    let len = plan.chunk_len(ld.item.chunk) as u64;
    FetchOp {
        dram_base: desc.base
            + ld.item.plane as u64 * desc.plane_bytes(block, cfg.dk) as u64
            + (ld.item.block * block) as u64 * row_bytes
            + (ld.item.chunk * plan.chunk_words) as u64 * word_bytes,
        block_size_bytes: len * word_bytes,
        block_offset_bytes: row_bytes,
        block_count: block as u64,
        buf_offset: (ld.slot * plan.chunk_words) as u64,
        buf_start: buf_start as u64,
        buf_range: block as u64,
        words_per_buffer: len,
    }
}

/// Emit the program for a prepared plan.
pub fn emit(problem: &GemmProblem, plan: &TilePlan, cfg: &HwConfig, overlap: bool) -> Program {
    let batches = batches(plan, overlap);
    let ends = plan.tile_ends();
    let tiles = plan.tiles.len();
    // Result tiles in flight; each needs a token slot in both directions.
    let inflight = cfg.br.min(cfg.fifo_capacity);
    let mut p = Program::default();

    // Position of every release signal in the execute queue: key `2e` is
    // right after the fetch wait in front of execute `e`, key `2e + 1` right
    // after execute `e`. A release is never signalled before the batch
    // `fifo_capacity` places earlier has been consumed, which bounds the
    // tokens outstanding in both directions.
    let mut release_keys: BTreeMap<usize, usize> = BTreeMap::new();
    let mut consumed: Option<usize> = None;
    for (i, b) in batches.iter().enumerate() {
        if b.release > consumed {
            p.fetch.push(Instruction::Wait {
                stage: Stage::Fetch,
                fifo: Stage::Execute,
            });
            consumed = b.release;
            let after_exec = 2 * b.release.expect("release is set") + 1;
            let gate = i.checked_sub(cfg.fifo_capacity).map_or(0, |j| 2 * batches[j].need);
            *release_keys.entry(after_exec.max(gate)).or_default() += 1;
        }
        for ld in &b.loads {
            p.fetch.push(Instruction::RunFetch(fetch_op(problem, plan, cfg, ld)));
        }
        p.fetch.push(Instruction::Signal {
            stage: Stage::Fetch,
            fifo: Stage::Execute,
        });
    }

    let signal_fetch = Instruction::Signal {
        stage: Stage::Execute,
        fifo: Stage::Fetch,
    };
    let signal_result = Instruction::Signal {
        stage: Stage::Execute,
        fifo: Stage::Result,
    };
    let wait_result = Instruction::Wait {
        stage: Stage::Execute,
        fifo: Stage::Result,
    };
    let releases_at = |key: usize| vec![signal_fetch; release_keys.get(&key).copied().unwrap_or(0)];
    let mut next_batch = batches.iter().map(|b| b.need).peekable();
    for (e, x) in plan.execs.iter().enumerate() {
        if next_batch.peek() == Some(&e) {
            next_batch.next();
            p.execute.push(Instruction::Wait {
                stage: Stage::Execute,
                fifo: Stage::Fetch,
            });
            p.execute.extend(releases_at(2 * e));
        }
        p.execute.push(Instruction::RunExecute(ExecOp {
            lhs_offset: (x.lhs_slot * plan.chunk_words) as u64,
            rhs_offset: (x.rhs_slot * plan.chunk_words) as u64,
            dot_length: x.len as u64,
            negate: x.negate,
            acc_mode: x.acc_mode,
        }));
        let tile_end = ends[x.tile] == e;
        if overlap {
            p.execute.extend(releases_at(2 * e + 1));
            if tile_end {
                if x.tile >= inflight {
                    p.execute.push(wait_result);
                }
                p.execute.push(signal_result);
            }
        } else {
            if tile_end {
                p.execute.push(signal_result);
                p.execute.push(wait_result);
            }
            p.execute.extend(releases_at(2 * e + 1));
        }
    }

    let tile_bytes = cfg.result_tile_bytes() as u64;
    for (t, &(mb, nb)) in plan.tiles.iter().enumerate() {
        p.result.push(Instruction::Wait {
            stage: Stage::Result,
            fifo: Stage::Execute,
        });
        p.result.push(Instruction::RunResult(ResultOp {
            dram_base: problem.result_base,
            offset: (mb * plan.grid.1 + nb) as u64 * tile_bytes,
        }));
        if !overlap || t + inflight < tiles {
            p.result.push(Instruction::Signal {
                stage: Stage::Result,
                fifo: Stage::Execute,
            });
        }
    }
    p
}

/// Generate the program computing `lhs * rhs^T` into the result region.
pub fn generate(problem: &GemmProblem, cfg: &HwConfig, overlap: bool) -> Result<Program, ScheduleError> {
    generate_with(
        problem,
        cfg,
        &ScheduleOptions {
            overlap,
            chunk_words: None,
        },
    )
}

pub fn generate_with(problem: &GemmProblem, cfg: &HwConfig, opts: &ScheduleOptions) -> Result<Program, ScheduleError> {
    let plan = plan(problem, cfg, opts)?;
    Ok(emit(problem, &plan, cfg, opts.overlap))
}

/// Instructions per queue `(fetch, execute, result)` that [`generate`]
/// would emit, computed from the plan without building the operations.
pub fn estimate_instruction_count(
    dims: (usize, usize, usize),
    bits: (u32, u32),
    cfg: &HwConfig,
    overlap: bool,
) -> Result<(usize, usize, usize), ScheduleError> {
    let desc = |rows, bits| MatrixDesc {
        base: 0,
        rows,
        cols: dims.1,
        bits,
        signed: false,
    };
    let problem = GemmProblem {
        lhs: desc(dims.0, bits.0),
        rhs: desc(dims.2, bits.1),
        result_base: 0,
    };
    let plan = plan(
        &problem,
        cfg,
        &ScheduleOptions {
            overlap,
            chunk_words: None,
        },
    )?;
    let batches = batches(&plan, overlap);
    let releases: BTreeSet<usize> = batches.iter().filter_map(|b| b.release).collect();
    let tiles = plan.tiles.len();
    let fetch = plan.loads.len() + batches.len() + releases.len();
    let result_waits = if overlap {
        tiles.saturating_sub(cfg.br.min(cfg.fifo_capacity))
    } else {
        tiles
    };
    let execute = plan.execs.len() + batches.len() + releases.len() + tiles + result_waits;
    let result = 2 * tiles + result_waits;
    Ok((fetch, execute, result))
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Matrix(#[from] BitMatrixError),
    #[error(transparent)]
    Gemm(#[from] GemmError),
}

const ALIGN: usize = 64;

/// Lay out `l` (M x K) and `r` (K x N) in a fresh memory image and describe
/// the product.
pub fn prepare(l: &BitParallelMatrix, r: &BitParallelMatrix, cfg: &HwConfig) -> Result<(GemmProblem, MemModel), RunError> {
    cfg.validate().map_err(ScheduleError::from)?;
    if l.cols() != r.rows() {
        return Err(ScheduleError::DimensionMismatch {
            lhs: l.cols(),
            rhs: r.rows(),
        }
        .into());
    }
    let rt = r.transpose();
    let lhs = MatrixDesc {
        base: 0,
        rows: l.rows(),
        cols: l.cols(),
        bits: l.bits(),
        signed: l.signed(),
    };
    let lhs_bytes = lhs.footprint(cfg.dm, cfg.dk);
    let rhs = MatrixDesc {
        base: lhs_bytes.next_multiple_of(ALIGN) as u64,
        rows: rt.rows(),
        cols: rt.cols(),
        bits: rt.bits(),
        signed: rt.signed(),
    };
    let rhs_end = rhs.base as usize + rhs.footprint(cfg.dn, cfg.dk);
    let problem = GemmProblem {
        lhs,
        rhs,
        result_base: rhs_end.next_multiple_of(ALIGN) as u64,
    };
    let mut mem = MemModel::new(problem.result_base as usize + problem.result_bytes(cfg));
    let lp = l.zero_padded(lhs.padded_rows(cfg.dm), l.cols());
    mem.write(lhs.base, &pack_planes(&lp, cfg.dk))?;
    let rp = rt.zero_padded(rhs.padded_rows(cfg.dn), rt.cols());
    mem.write(rhs.base, &pack_planes(&rp, cfg.dk))?;
    Ok((problem, mem))
}

/// Collect the product from the tile-major result region.
pub fn read_result(mem: &MemModel, problem: &GemmProblem, cfg: &HwConfig) -> Result<AccumMatrix, RunError> {
    let (_, nbs) = problem.tile_grid(cfg);
    let eb = cfg.acc_bits as usize / 8;
    let tile_bytes = cfg.result_tile_bytes();
    let (m, n) = (problem.m(), problem.n());
    let mut elems = Vec::with_capacity(m * n);
    for row in 0..m {
        for col in 0..n {
            let tile = (row / cfg.dm) * nbs + col / cfg.dn;
            let within = (row % cfg.dm) * cfg.dn + col % cfg.dn;
            let addr = problem.result_base + (tile * tile_bytes + within * eb) as u64;
            let bytes = mem.peek(addr, eb)?;
            let mut raw = [0u8; 8];
            raw[..eb].copy_from_slice(bytes);
            let shift = 64 - cfg.acc_bits;
            elems.push((i64::from_le_bytes(raw) << shift) >> shift);
        }
    }
    Ok(AccumMatrix::new(m, n, cfg.acc_bits, elems)?)
}

/// Schedule, simulate and read back `l * r`.
pub fn run_gemm(
    l: &BitParallelMatrix,
    r: &BitParallelMatrix,
    cfg: &HwConfig,
    opts: &ScheduleOptions,
) -> Result<(AccumMatrix, SimReport, Program), RunError> {
    let (problem, mem) = prepare(l, r, cfg)?;
    let program = generate_with(&problem, cfg, opts)?;
    let (mem, report) = run_timed(&program, mem, cfg)?;
    Ok((read_result(&mem, &problem, cfg)?, report, program))
}

/// Queue layout of a program as compact mnemonics, e.g. `R L1` style
/// listings used in tests and the CLI.
pub fn summarize(p: &Program) -> Vec<(Queue, Vec<String>)> {
    [Queue::Fetch, Queue::Execute, Queue::Result]
        .into_iter()
        .map(|q| (q, p.queue(q).iter().map(Instruction::mnemonic).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::validate;
    use crate::refgemm::gemm_naive_with;

    fn small_cfg(dm: usize, dn: usize, bm: usize, bn: usize) -> HwConfig {
        let mut c = HwConfig::new(dm, 32, dn).with_buffers(bm, bn);
        c.dma_latency = 4;
        c
    }

    fn worked_example() -> (BitParallelMatrix, BitParallelMatrix) {
        let l = BitParallelMatrix::from_rows(&[vec![2, 0], vec![1, 3]], 2, false).unwrap();
        let r = BitParallelMatrix::from_rows(&[vec![0, 1], vec![1, 2]], 2, false).unwrap();
        (l, r)
    }

    fn kinds(p: &Program, q: Queue) -> Vec<&'static str> {
        p.queue(q)
            .iter()
            .map(|i| match i {
                Instruction::Wait { .. } => "W",
                Instruction::Signal { .. } => "S",
                _ => "R",
            })
            .collect()
    }

    #[test]
    fn constrained_two_bit_structure() {
        let cfg = small_cfg(2, 2, 1, 2);
        let (l, r) = worked_example();
        let (res, _, p) = run_gemm(&l, &r, &cfg, &ScheduleOptions {
            overlap: true,
            chunk_words: None,
        })
        .unwrap();
        assert_eq!(res.to_rows(), vec![vec![0, 2], vec![3, 7]]);
        assert_eq!(kinds(&p, Queue::Fetch), ["R", "R", "S", "R", "S", "W", "R", "S"]);
        assert_eq!(kinds(&p, Queue::Execute), ["W", "R", "W", "R", "S", "W", "R", "R", "S"]);
        assert_eq!(kinds(&p, Queue::Result), ["W", "R"]);
        let modes: Vec<AccMode> = p
            .execute
            .iter()
            .filter_map(|i| match i {
                Instruction::RunExecute(e) => Some(e.acc_mode),
                _ => None,
            })
            .collect();
        assert_eq!(modes, [AccMode::Zero, AccMode::ShiftLeft1, AccMode::Keep, AccMode::ShiftLeft1]);
        assert_eq!(estimate_instruction_count((2, 2, 2), (2, 2), &cfg, true).unwrap(), (8, 9, 2));
    }

    #[test]
    fn minimal_tile() {
        let cfg = small_cfg(1, 1, 4, 4);
        let l = BitParallelMatrix::from_rows(&[vec![1; 32]], 1, false).unwrap();
        let r = l.transpose();
        for overlap in [false, true] {
            let (res, _, p) = run_gemm(&l, &r, &cfg, &ScheduleOptions { overlap, chunk_words: None }).unwrap();
            assert_eq!(res.get(0, 0), 32);
            assert_eq!(kinds(&p, Queue::Fetch), ["R", "R", "S"]);
            assert_eq!(p.execute.iter().filter(|i| matches!(i, Instruction::RunExecute(_))).count(), 1);
            assert_eq!(p.result.iter().filter(|i| matches!(i, Instruction::RunResult(_))).count(), 1);
        }
    }

    #[test]
    fn forced_chunk_capacity_error() {
        let cfg = small_cfg(2, 2, 4, 8);
        let (l, r) = worked_example();
        let (problem, _) = prepare(&l, &r, &cfg).unwrap();
        let err = generate_with(&problem, &cfg, &ScheduleOptions {
            overlap: false,
            chunk_words: Some(5),
        })
        .unwrap_err();
        assert!(matches!(err, ScheduleError::Capacity { dimension: "bm", .. }), "{err}");
    }

    #[test]
    fn multi_tile_multi_chunk_matches_oracle() {
        let cfg = small_cfg(2, 3, 3, 4);
        let l: Vec<Vec<i64>> = (0..5).map(|i| (0..100).map(|j| ((i * 7 + j * 3) % 8) as i64 - 4).collect()).collect();
        let r: Vec<Vec<i64>> = (0..100).map(|i| (0..4).map(|j| ((i * 5 + j) % 4) as i64).collect()).collect();
        let l = BitParallelMatrix::from_rows(&l, 3, true).unwrap();
        let r = BitParallelMatrix::from_rows(&r, 2, false).unwrap();
        let want = gemm_naive_with(&l, &r, 32).unwrap();
        for overlap in [false, true] {
            let opts = ScheduleOptions { overlap, chunk_words: None };
            let (res, rep, p) = run_gemm(&l, &r, &cfg, &opts).unwrap();
            assert_eq!(res, want);
            assert!(rep.hazards.is_empty(), "{:?}", rep.hazards);
            assert!(validate(&p, &cfg).is_valid());
            let counts = estimate_instruction_count((5, 100, 4), (3, 2), &cfg, overlap).unwrap();
            assert_eq!(counts, p.counts());
        }
    }

    #[test]
    fn overlap_is_not_slower() {
        let cfg = small_cfg(2, 2, 8, 8);
        let l = BitParallelMatrix::new(6, 64, 2, false, (0..384).map(|i| i % 4).collect()).unwrap();
        let r = BitParallelMatrix::new(64, 6, 1, false, (0..384).map(|i| (i / 3) % 2).collect()).unwrap();
        let t = |overlap| {
            run_gemm(&l, &r, &cfg, &ScheduleOptions { overlap, chunk_words: None })
                .unwrap()
                .1
                .cycles_total
        };
        assert!(t(true) < t(false));
    }
}
