//! Reference integer and bit-serial matrix multiplication.
//!
//! Three engines compute `P = L * R` and must agree exactly:
//! [`gemm_naive`] uses plain integer arithmetic, [`gemm_bitserial`] sums
//! weighted binary plane products in bit-position order, and
//! [`gemm_wavefront`] replays the accumulator-shifting order used by the
//! hardware, where every step only ever shifts the accumulator left by one.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::bitmatrix::{BitParallelMatrix, BitSerialMatrix};

/// Accumulator width used when none is given.
pub const DEFAULT_ACC_BITS: u32 = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GemmError {
    #[error("dimension mismatch: left operand has {lhs_cols} columns, right operand has {rhs_rows} rows")]
    DimensionMismatch { lhs_cols: usize, rhs_rows: usize },
    #[error("accumulator overflow at ({row}, {col}): {value} does not fit in {acc_bits} bits")]
    Overflow {
        row: usize,
        col: usize,
        value: i128,
        acc_bits: u32,
    },
    #[error("accumulator width {0} must be between 2 and 64")]
    InvalidAccBits(u32),
}

pub type Result<T> = std::result::Result<T, GemmError>;

fn check_acc_bits(acc_bits: u32) -> Result<()> {
    if !(2..=64).contains(&acc_bits) {
        return Err(GemmError::InvalidAccBits(acc_bits));
    }
    Ok(())
}

/// True when `v` fits an `acc_bits`-bit two's complement register.
pub fn fits_accumulator(v: i128, acc_bits: u32) -> bool {
    let lim = 1i128 << (acc_bits - 1);
    v >= -lim && v < lim
}

/// Result matrix of signed accumulator values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccumMatrix {
    rows: usize,
    cols: usize,
    acc_bits: u32,
    elems: Vec<i64>,
}

impl AccumMatrix {
    pub fn new(rows: usize, cols: usize, acc_bits: u32, elems: Vec<i64>) -> Result<Self> {
        check_acc_bits(acc_bits)?;
        assert_eq!(elems.len(), rows * cols, "element count must match shape");
        if let Some(idx) = elems.iter().position(|&v| !fits_accumulator(v as i128, acc_bits)) {
            return Err(GemmError::Overflow {
                row: idx / cols,
                col: idx % cols,
                value: elems[idx] as i128,
                acc_bits,
            });
        }
        Ok(Self {
            rows,
            cols,
            acc_bits,
            elems,
        })
    }

    fn from_wide(rows: usize, cols: usize, acc_bits: u32, wide: &[i128]) -> Result<Self> {
        if let Some(idx) = wide.iter().position(|&v| !fits_accumulator(v, acc_bits)) {
            return Err(GemmError::Overflow {
                row: idx / cols,
                col: idx % cols,
                value: wide[idx],
                acc_bits,
            });
        }
        Ok(Self {
            rows,
            cols,
            acc_bits,
            elems: wide.iter().map(|&v| v as i64).collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn acc_bits(&self) -> u32 {
        self.acc_bits
    }

    pub fn elems(&self) -> &[i64] {
        &self.elems
    }

    pub fn get(&self, row: usize, col: usize) -> i64 {
        self.elems[row * self.cols + col]
    }

    pub fn to_rows(&self) -> Vec<Vec<i64>> {
        self.elems.chunks(self.cols).map(<[i64]>::to_vec).collect()
    }
}

/// How the accumulator is combined with a new contribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccMode {
    Zero,
    Keep,
    ShiftLeft1,
}

impl AccMode {
    pub fn apply(self, acc: i128) -> i128 {
        match self {
            AccMode::Zero => 0,
            AccMode::Keep => acc,
            AccMode::ShiftLeft1 => acc << 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AccMode::Zero => "zero",
            AccMode::Keep => "keep",
            AccMode::ShiftLeft1 => "shl1",
        }
    }
}

impl fmt::Display for AccMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AccMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "zero" => Ok(AccMode::Zero),
            "keep" => Ok(AccMode::Keep),
            "shl1" => Ok(AccMode::ShiftLeft1),
            other => Err(format!("unknown accumulator mode `{other}` (expected zero, keep or shl1)")),
        }
    }
}

/// One binary plane product in wavefront order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavefrontStep {
    pub l_bit: u32,
    pub r_bit: u32,
    pub negate: bool,
    pub acc_mode: AccMode,
}

/// Whether the product of planes `i` and `j` carries a negative weight.
pub fn plane_negate(i: u32, j: u32, l: u32, r: u32, signed_l: bool, signed_r: bool) -> bool {
    (signed_l && i + 1 == l) ^ (signed_r && j + 1 == r)
}

/// Enumerate plane pairs by decreasing `i + j`; inside a wavefront the left
/// bit position decreases.
pub fn wavefront_schedule(l: u32, r: u32, signed_l: bool, signed_r: bool) -> Vec<WavefrontStep> {
    assert!(l >= 1 && r >= 1, "precisions must be positive");
    let mut steps = Vec::with_capacity((l * r) as usize);
    for s in (0..=(l - 1) + (r - 1)).rev() {
        let mut opening = true;
        for i in (0..l).rev() {
            let Some(j) = s.checked_sub(i).filter(|&j| j < r) else {
                continue;
            };
            let acc_mode = if steps.is_empty() {
                AccMode::Zero
            } else if opening {
                AccMode::ShiftLeft1
            } else {
                AccMode::Keep
            };
            opening = false;
            steps.push(WavefrontStep {
                l_bit: i,
                r_bit: j,
                negate: plane_negate(i, j, l, r, signed_l, signed_r),
                acc_mode,
            });
        }
    }
    steps
}

/// Number of binary operations for an `m x k x n` product at `l x r` bits,
/// counting each AND and each popcount addition once.
pub fn count_binary_ops(m: u64, k: u64, n: u64, l: u64, r: u64) -> u64 {
    2 * m * k * n * l * r
}

/// AND-popcount of two equally long word slices.
pub fn and_popcount(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum()
}

pub fn gemm_naive(l: &BitParallelMatrix, r: &BitParallelMatrix) -> Result<AccumMatrix> {
    gemm_naive_with(l, r, DEFAULT_ACC_BITS)
}

pub fn gemm_naive_with(l: &BitParallelMatrix, r: &BitParallelMatrix, acc_bits: u32) -> Result<AccumMatrix> {
    check_acc_bits(acc_bits)?;
    if l.cols() != r.rows() {
        return Err(GemmError::DimensionMismatch {
            lhs_cols: l.cols(),
            rhs_rows: r.rows(),
        });
    }
    let (m, k, n) = (l.rows(), l.cols(), r.cols());
    let mut wide = vec![0i128; m * n];
    for i in 0..m {
        for t in 0..k {
            let a = l.get(i, t) as i128;
            if a == 0 {
                continue;
            }
            for j in 0..n {
                wide[i * n + j] += a * r.get(t, j) as i128;
            }
        }
    }
    AccumMatrix::from_wide(m, n, acc_bits, &wide)
}

/// Plane rows repacked into 64-bit words: `[plane][vector][word]`.
struct PackedPlanes {
    words: usize,
    vectors: usize,
    data: Vec<u64>,
}

impl PackedPlanes {
    fn row(&self, plane: u32, v: usize) -> &[u64] {
        let start = (plane as usize * self.vectors + v) * self.words;
        &self.data[start..start + self.words]
    }

    /// Rows of every plane of `m`.
    fn rows_of(m: &BitSerialMatrix) -> Self {
        let words = m.cols().div_ceil(64);
        let mut data = vec![0u64; m.bits() as usize * m.rows() * words];
        for b in 0..m.bits() {
            for r in 0..m.rows() {
                let base = (b as usize * m.rows() + r) * words;
                for c in 0..m.cols() {
                    if m.bit(b, r, c) {
                        data[base + c / 64] |= 1 << (c % 64);
                    }
                }
            }
        }
        Self {
            words,
            vectors: m.rows(),
            data,
        }
    }

    /// Columns of every plane of `m`.
    fn cols_of(m: &BitSerialMatrix) -> Self {
        let words = m.rows().div_ceil(64);
        let mut data = vec![0u64; m.bits() as usize * m.cols() * words];
        for b in 0..m.bits() {
            for r in 0..m.rows() {
                for c in 0..m.cols() {
                    if m.bit(b, r, c) {
                        data[(b as usize * m.cols() + c) * words + r / 64] |= 1 << (r % 64);
                    }
                }
            }
        }
        Self {
            words,
            vectors: m.cols(),
            data,
        }
    }
}

fn operands(l: &BitSerialMatrix, r: &BitSerialMatrix) -> Result<(PackedPlanes, PackedPlanes)> {
    if l.cols() != r.rows() {
        return Err(GemmError::DimensionMismatch {
            lhs_cols: l.cols(),
            rhs_rows: r.rows(),
        });
    }
    Ok((PackedPlanes::rows_of(l), PackedPlanes::cols_of(r)))
}

/// Weighted sum of binary plane products, bit positions in ascending order.
pub fn gemm_bitserial(l: &BitSerialMatrix, r: &BitSerialMatrix) -> Result<AccumMatrix> {
    gemm_bitserial_with(l, r, DEFAULT_ACC_BITS)
}

pub fn gemm_bitserial_with(l: &BitSerialMatrix, r: &BitSerialMatrix, acc_bits: u32) -> Result<AccumMatrix> {
    check_acc_bits(acc_bits)?;
    let (lp, rp) = operands(l, r)?;
    let (m, n) = (l.rows(), r.cols());
    let mut wide = vec![0i128; m * n];
    for i in 0..l.bits() {
        for j in 0..r.bits() {
            let sgn_l = if l.plane_is_negative(i) { -1 } else { 1 };
            let sgn_r = if r.plane_is_negative(j) { -1 } else { 1 };
            let weight = (sgn_l * sgn_r) as i128 * (1i128 << (i + j));
            for a in 0..m {
                for b in 0..n {
                    let pc = and_popcount(lp.row(i, a), rp.row(j, b));
                    wide[a * n + b] += weight * pc as i128;
                }
            }
        }
    }
    AccumMatrix::from_wide(m, n, acc_bits, &wide)
}

/// Wavefront-ordered accumulation with an `acc_bits` register checked after
/// every step.
pub fn gemm_wavefront(l: &BitSerialMatrix, r: &BitSerialMatrix) -> Result<AccumMatrix> {
    gemm_wavefront_with(l, r, DEFAULT_ACC_BITS)
}

pub fn gemm_wavefront_with(l: &BitSerialMatrix, r: &BitSerialMatrix, acc_bits: u32) -> Result<AccumMatrix> {
    check_acc_bits(acc_bits)?;
    let (lp, rp) = operands(l, r)?;
    let (m, n) = (l.rows(), r.cols());
    let steps = wavefront_schedule(l.bits(), r.bits(), l.signed(), r.signed());
    let mut wide = vec![0i128; m * n];
    for a in 0..m {
        for b in 0..n {
            let mut acc = 0i128;
            for st in &steps {
                let pc = and_popcount(lp.row(st.l_bit, a), rp.row(st.r_bit, b)) as i128;
                acc = st.acc_mode.apply(acc) + if st.negate { -pc } else { pc };
                if !fits_accumulator(acc, acc_bits) {
                    return Err(GemmError::Overflow {
                        row: a,
                        col: b,
                        value: acc,
                        acc_bits,
                    });
                }
            }
            wide[a * n + b] = acc;
        }
    }
    AccumMatrix::from_wide(m, n, acc_bits, &wide)
}
