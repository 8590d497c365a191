#![allow(dead_code)]

use bsmm::bitmatrix::{value_range, BitParallelMatrix};
use bsmm::isa::{AccMode, ExecOp, FetchOp, Instruction, P2sOp, Program, ResultOp, Stage};
use bsmm::simulator::HwConfig;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, bits: u32, signed: bool) -> BitParallelMatrix {
    let (lo, hi) = value_range(bits, signed).unwrap();
    let elems = (0..rows * cols).map(|_| rng.gen_range(lo..=hi)).collect();
    BitParallelMatrix::new(rows, cols, bits, signed, elems).unwrap()
}

/// Small overlay configurations with shallow buffers, so that chunking and
/// slot replacement get exercised.
pub fn random_config<R: Rng>(rng: &mut R) -> HwConfig {
    let dk = *[32usize, 64].choose(rng).unwrap();
    let mut cfg = HwConfig::new(rng.gen_range(1..=4), dk, rng.gen_range(1..=4));
    cfg.bm = *[1usize, 2, 3, 5, 8, 1024].choose(rng).unwrap();
    cfg.bn = *[1usize, 2, 4, 7, 1024].choose(rng).unwrap();
    cfg.br = rng.gen_range(1..=3);
    cfg.dma_latency = rng.gen_range(0..40);
    cfg.fifo_capacity = rng.gen_range(1..=16);
    cfg
}

fn legal_pair<R: Rng>(rng: &mut R, stage: Stage) -> Stage {
    *Stage::ALL.iter().filter(|s| stage.is_peer(**s)).collect::<Vec<_>>().choose(rng).copied().unwrap()
}

fn acc<R: Rng>(rng: &mut R) -> AccMode {
    *[AccMode::Zero, AccMode::Keep, AccMode::ShiftLeft1].choose(rng).unwrap()
}

fn small_or_any<R: Rng>(rng: &mut R) -> u64 {
    if rng.gen_bool(0.7) {
        rng.gen_range(0..4096)
    } else {
        rng.gen()
    }
}

pub fn random_instruction<R: Rng>(rng: &mut R, stage: Option<Stage>) -> Instruction {
    let Some(stage) = stage else {
        return Instruction::RunP2S(P2sOp {
            src_base: small_or_any(rng),
            dst_base: small_or_any(rng),
            rows: small_or_any(rng),
            cols: small_or_any(rng),
            precision: rng.gen_range(0..70),
        });
    };
    match rng.gen_range(0..3) {
        0 => Instruction::Wait {
            stage,
            fifo: legal_pair(rng, stage),
        },
        1 => Instruction::Signal {
            stage,
            fifo: legal_pair(rng, stage),
        },
        _ => match stage {
            Stage::Fetch => Instruction::RunFetch(FetchOp {
                dram_base: small_or_any(rng),
                block_size_bytes: small_or_any(rng),
                block_offset_bytes: small_or_any(rng),
                block_count: small_or_any(rng),
                buf_offset: small_or_any(rng),
                buf_start: small_or_any(rng),
                buf_range: small_or_any(rng),
                words_per_buffer: small_or_any(rng),
            }),
            Stage::Execute => Instruction::RunExecute(ExecOp {
                lhs_offset: small_or_any(rng),
                rhs_offset: small_or_any(rng),
                dot_length: small_or_any(rng),
                negate: rng.gen(),
                acc_mode: acc(rng),
            }),
            Stage::Result => Instruction::RunResult(ResultOp {
                dram_base: small_or_any(rng),
                offset: small_or_any(rng),
            }),
        },
    }
}

/// Arbitrary program with up to `max_len` instructions per queue.
pub fn random_program<R: Rng>(rng: &mut R, max_len: usize) -> Program {
    let mut p = Program::default();
    for _ in 0..rng.gen_range(0..=max_len / 4) {
        p.p2s.push(random_instruction(rng, None));
    }
    for stage in Stage::ALL {
        for _ in 0..rng.gen_range(0..=max_len) {
            p.push(random_instruction(rng, Some(stage)));
        }
    }
    p
}
