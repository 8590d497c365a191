//! Bit-parallel and bit-serial integer matrices.
//!
//! A [`BitParallelMatrix`] is an ordinary row-major integer matrix carrying a
//! declared precision and signedness. A [`BitSerialMatrix`] stores the same
//! values as a stack of binary planes in `[bits][rows][columns]` order, each
//! row packed into storage words. Plane `b` holds bit `b` of the two's
//! complement encoding of every element.
//!
//! [`p2s_pack`] produces the byte-exact layout written by the parallel-to-serial
//! converter: plane 0 first, each plane row-major, each row padded with zero
//! columns up to a multiple of the write-bus width.

use thiserror::Error;

/// Storage word width used when none is requested explicitly.
pub const DEFAULT_WORD_WIDTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BitMatrixError {
    #[error("matrix must have at least one row and one column, got {rows}x{cols}")]
    Empty { rows: usize, cols: usize },
    #[error("unsupported precision: {bits} bits ({kind})")]
    InvalidBits { bits: u32, kind: &'static str },
    #[error("element {value} at ({row}, {col}) does not fit in {bits} {kind} bits")]
    OutOfRange {
        row: usize,
        col: usize,
        value: i64,
        bits: u32,
        kind: &'static str,
    },
    #[error("expected {expected} elements, got {actual}")]
    ElementCount { expected: usize, actual: usize },
    #[error("row {row} has {actual} columns, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        actual: usize,
    },
    #[error("word width {0} must be a power of two between 8 and 64")]
    InvalidWordWidth(usize),
    #[error("precision {bits} exceeds the maximum supported precision {max}")]
    UnsupportedPrecision { bits: u32, max: u32 },
    #[error("invalid layout parameters: {0}")]
    InvalidLayout(String),
    #[error("bit-serial payload is {actual} bytes, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("plane {plane}, row {row}: padding bits beyond column {cols} are not zero")]
    DirtyPadding { plane: u32, row: usize, cols: usize },
}

pub type Result<T> = std::result::Result<T, BitMatrixError>;

fn kind(signed: bool) -> &'static str {
    if signed {
        "signed"
    } else {
        "unsigned"
    }
}

/// Inclusive value range representable in `bits` bits.
///
/// Elements live in `i64`, so unsigned precisions stop at 63 bits.
pub fn value_range(bits: u32, signed: bool) -> Result<(i64, i64)> {
    let max_bits = if signed { 64 } else { 63 };
    if bits == 0 || bits > max_bits {
        return Err(BitMatrixError::InvalidBits {
            bits,
            kind: kind(signed),
        });
    }
    if signed {
        let lo = (-1i128 << (bits - 1)) as i64;
        let hi = ((1i128 << (bits - 1)) - 1) as i64;
        Ok((lo, hi))
    } else {
        Ok((0, ((1i128 << bits) - 1) as i64))
    }
}

/// Smallest precision able to hold every value under the given signedness.
pub fn required_bits(values: &[i64], signed: bool) -> u32 {
    let mut bits = 1;
    for &v in values {
        let need = if signed {
            if v >= 0 {
                65 - v.leading_zeros()
            } else {
                65 - (!v).leading_zeros()
            }
        } else {
            (64 - (v.max(0) as u64).leading_zeros()).max(1)
        };
        bits = bits.max(need);
    }
    bits
}

fn check_word_width(word_width: usize) -> Result<()> {
    if !word_width.is_power_of_two() || !(8..=64).contains(&word_width) {
        return Err(BitMatrixError::InvalidWordWidth(word_width));
    }
    Ok(())
}

/// Integer matrix with declared precision and signedness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitParallelMatrix {
    rows: usize,
    cols: usize,
    bits: u32,
    signed: bool,
    elems: Vec<i64>,
}

impl BitParallelMatrix {
    pub fn new(rows: usize, cols: usize, bits: u32, signed: bool, elems: Vec<i64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(BitMatrixError::Empty { rows, cols });
        }
        if elems.len() != rows * cols {
            return Err(BitMatrixError::ElementCount {
                expected: rows * cols,
                actual: elems.len(),
            });
        }
        let (lo, hi) = value_range(bits, signed)?;
        if let Some(idx) = elems.iter().position(|v| *v < lo || *v > hi) {
            return Err(BitMatrixError::OutOfRange {
                row: idx / cols,
                col: idx % cols,
                value: elems[idx],
                bits,
                kind: kind(signed),
            });
        }
        Ok(Self {
            rows,
            cols,
            bits,
            signed,
            elems,
        })
    }

    pub fn from_rows(rows: &[Vec<i64>], bits: u32, signed: bool) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut elems = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(BitMatrixError::RaggedRows {
                    row: r,
                    expected: cols,
                    actual: row.len(),
                });
            }
            elems.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, bits, signed, elems)
    }

    pub fn zeros(rows: usize, cols: usize, bits: u32, signed: bool) -> Result<Self> {
        Self::new(rows, cols, bits, signed, vec![0; rows * cols])
    }

    /// Identity matrix of size `n`.
    pub fn identity(n: usize, bits: u32, signed: bool) -> Result<Self> {
        let mut elems = vec![0; n * n];
        for i in 0..n {
            elems[i * n + i] = 1;
        }
        Self::new(n, n, bits, signed, elems)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn signed(&self) -> bool {
        self.signed
    }

    pub fn elems(&self) -> &[i64] {
        &self.elems
    }

    pub fn get(&self, row: usize, col: usize) -> i64 {
        self.elems[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[i64] {
        &self.elems[row * self.cols..(row + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<i64>> {
        self.elems.chunks(self.cols).map(<[i64]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut elems = vec![0; self.elems.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                elems[c * self.rows + r] = self.elems[r * self.cols + c];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            bits: self.bits,
            signed: self.signed,
            elems,
        }
    }

    /// Copy with zero rows and columns appended up to the requested shape.
    pub fn zero_padded(&self, rows: usize, cols: usize) -> Self {
        let rows = rows.max(self.rows);
        let cols = cols.max(self.cols);
        let mut elems = vec![0; rows * cols];
        for r in 0..self.rows {
            elems[r * cols..r * cols + self.cols].copy_from_slice(self.row(r));
        }
        Self {
            rows,
            cols,
            bits: self.bits,
            signed: self.signed,
            elems,
        }
    }

    /// Top-left `rows x cols` sub-matrix.
    pub fn cropped(&self, rows: usize, cols: usize) -> Self {
        let rows = rows.min(self.rows);
        let cols = cols.min(self.cols);
        let mut elems = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            elems.extend_from_slice(&self.row(r)[..cols]);
        }
        Self {
            rows,
            cols,
            bits: self.bits,
            signed: self.signed,
            elems,
        }
    }
}

/// Stack of binary planes in `[bits][rows][columns]` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitSerialMatrix {
    rows: usize,
    cols: usize,
    bits: u32,
    signed: bool,
    word_width: usize,
    words_per_row: usize,
    planes: Vec<u64>,
}

impl BitSerialMatrix {
    /// Assemble a matrix from raw plane words, laid out plane-major then
    /// row-major with `ceil(cols / word_width)` words per row.
    pub fn from_planes(
        rows: usize,
        cols: usize,
        bits: u32,
        signed: bool,
        word_width: usize,
        planes: Vec<u64>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(BitMatrixError::Empty { rows, cols });
        }
        check_word_width(word_width)?;
        value_range(bits, signed)?;
        let words_per_row = cols.div_ceil(word_width);
        let expected = bits as usize * rows * words_per_row;
        if planes.len() != expected {
            return Err(BitMatrixError::ElementCount {
                expected,
                actual: planes.len(),
            });
        }
        let m = Self {
            rows,
            cols,
            bits,
            signed,
            word_width,
            words_per_row,
            planes,
        };
        for b in 0..bits {
            for r in 0..rows {
                let row = m.plane_row(b, r);
                for (w, &word) in row.iter().enumerate() {
                    let valid = (cols - w * word_width).min(word_width);
                    let mask = if valid == 64 { u64::MAX } else { (1u64 << valid) - 1 };
                    if word & !mask != 0 {
                        return Err(BitMatrixError::DirtyPadding { plane: b, row: r, cols });
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn signed(&self) -> bool {
        self.signed
    }

    pub fn word_width(&self) -> usize {
        self.word_width
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    /// Total storage footprint in bits, padding included.
    pub fn stored_bits(&self) -> usize {
        self.planes.len() * self.word_width
    }

    pub fn plane_row(&self, bit: u32, row: usize) -> &[u64] {
        let start = (bit as usize * self.rows + row) * self.words_per_row;
        &self.planes[start..start + self.words_per_row]
    }

    pub fn bit(&self, bit: u32, row: usize, col: usize) -> bool {
        let word = self.plane_row(bit, row)[col / self.word_width];
        (word >> (col % self.word_width)) & 1 == 1
    }

    /// Plane `bit` as a dense 0/1 matrix, handy for inspection and tests.
    pub fn plane(&self, bit: u32) -> Vec<Vec<u8>> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.bit(bit, r, c) as u8).collect())
            .collect()
    }

    /// Sign of the weight applied to plane `bit` when reconstructing.
    pub fn plane_is_negative(&self, bit: u32) -> bool {
        self.signed && bit + 1 == self.bits
    }
}

/// Split a matrix into bit planes packed into `word_width`-bit words.
pub fn decompose(m: &BitParallelMatrix, word_width: usize) -> Result<BitSerialMatrix> {
    check_word_width(word_width)?;
    let (lo, hi) = value_range(m.bits, m.signed)?;
    let words_per_row = m.cols.div_ceil(word_width);
    let mut planes = vec![0u64; m.bits as usize * m.rows * words_per_row];
    for r in 0..m.rows {
        for c in 0..m.cols {
            let v = m.get(r, c);
            if v < lo || v > hi {
                return Err(BitMatrixError::OutOfRange {
                    row: r,
                    col: c,
                    value: v,
                    bits: m.bits,
                    kind: kind(m.signed),
                });
            }
            let enc = v as u64;
            for b in 0..m.bits {
                if (enc >> b) & 1 == 1 {
                    let idx = (b as usize * m.rows + r) * words_per_row + c / word_width;
                    planes[idx] |= 1u64 << (c % word_width);
                }
            }
        }
    }
    Ok(BitSerialMatrix {
        rows: m.rows,
        cols: m.cols,
        bits: m.bits,
        signed: m.signed,
        word_width,
        words_per_row,
        planes,
    })
}

/// Weighted sum of planes; the top plane carries a negative weight when signed.
pub fn reconstruct(m: &BitSerialMatrix) -> BitParallelMatrix {
    let mut elems = vec![0i64; m.rows * m.cols];
    for r in 0..m.rows {
        for c in 0..m.cols {
            let mut acc: i128 = 0;
            for b in 0..m.bits {
                if m.bit(b, r, c) {
                    let w = 1i128 << b;
                    acc += if m.plane_is_negative(b) { -w } else { w };
                }
            }
            elems[r * m.cols + c] = acc as i64;
        }
    }
    BitParallelMatrix {
        rows: m.rows,
        cols: m.cols,
        bits: m.bits,
        signed: m.signed,
        elems,
    }
}

/// Bus widths and maximum precision of the parallel-to-serial converter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutParams {
    pub read_bus_bits: usize,
    pub write_bus_bits: usize,
    pub max_precision: u32,
}

impl LayoutParams {
    pub fn new(read_bus_bits: usize, write_bus_bits: usize, max_precision: u32) -> Result<Self> {
        for (name, w) in [("read bus", read_bus_bits), ("write bus", write_bus_bits)] {
            if !w.is_power_of_two() || w < 8 {
                return Err(BitMatrixError::InvalidLayout(format!(
                    "{name} width {w} must be a power of two >= 8"
                )));
            }
        }
        if !(1..=64).contains(&max_precision) {
            return Err(BitMatrixError::InvalidLayout(format!(
                "maximum precision {max_precision} outside 1..=64"
            )));
        }
        Ok(Self {
            read_bus_bits,
            write_bus_bits,
            max_precision,
        })
    }

    /// Columns after padding up to a whole number of write-bus words.
    pub fn padded_cols(&self, cols: usize) -> usize {
        cols.div_ceil(self.write_bus_bits) * self.write_bus_bits
    }

    /// Payload size of a packed matrix.
    pub fn packed_len(&self, rows: usize, cols: usize, bits: u32) -> usize {
        bits as usize * rows * self.padded_cols(cols) / 8
    }
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            read_bus_bits: 64,
            write_bus_bits: 64,
            max_precision: 8,
        }
    }
}

/// Pack bit planes with every row padded to a multiple of `pad_bits` columns.
///
/// Bit `c` of a row lands in byte `c / 8`, bit `c % 8`; a row of `R` columns is
/// therefore a sequence of little-endian `R`-bit words.
pub fn pack_planes(m: &BitParallelMatrix, pad_bits: usize) -> Vec<u8> {
    let row_bytes = m.cols.div_ceil(pad_bits) * pad_bits / 8;
    let mut out = vec![0u8; m.bits as usize * m.rows * row_bytes];
    for r in 0..m.rows {
        for c in 0..m.cols {
            let enc = m.get(r, c) as u64;
            for b in 0..m.bits {
                if (enc >> b) & 1 == 1 {
                    out[(b as usize * m.rows + r) * row_bytes + c / 8] |= 1 << (c % 8);
                }
            }
        }
    }
    out
}

/// Inverse of [`pack_planes`] for a known shape and padding.
pub fn unpack_planes(
    bytes: &[u8],
    rows: usize,
    cols: usize,
    bits: u32,
    signed: bool,
    pad_bits: usize,
) -> Result<BitParallelMatrix> {
    value_range(bits, signed)?;
    if rows == 0 || cols == 0 {
        return Err(BitMatrixError::Empty { rows, cols });
    }
    let row_bytes = cols.div_ceil(pad_bits) * pad_bits / 8;
    let expected = bits as usize * rows * row_bytes;
    if bytes.len() != expected {
        return Err(BitMatrixError::LengthMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let mut elems = vec![0i64; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc: i128 = 0;
            for b in 0..bits {
                let byte = bytes[(b as usize * rows + r) * row_bytes + c / 8];
                if (byte >> (c % 8)) & 1 == 1 {
                    let w = 1i128 << b;
                    acc += if signed && b + 1 == bits { -w } else { w };
                }
            }
            elems[r * cols + c] = acc as i64;
        }
    }
    BitParallelMatrix::new(rows, cols, bits, signed, elems)
}

/// Byte-exact parallel-to-serial layout of `m`.
pub fn p2s_pack(m: &BitParallelMatrix, lp: &LayoutParams) -> Result<Vec<u8>> {
    if m.bits > lp.max_precision {
        return Err(BitMatrixError::UnsupportedPrecision {
            bits: m.bits,
            max: lp.max_precision,
        });
    }
    Ok(pack_planes(m, lp.write_bus_bits))
}

/// Read back a [`p2s_pack`] payload; padding columns are discarded.
pub fn p2s_unpack(
    bytes: &[u8],
    rows: usize,
    cols: usize,
    bits: u32,
    signed: bool,
    lp: &LayoutParams,
) -> Result<BitParallelMatrix> {
    if bits > lp.max_precision {
        return Err(BitMatrixError::UnsupportedPrecision {
            bits,
            max: lp.max_precision,
        });
    }
    unpack_planes(bytes, rows, cols, bits, signed, lp.write_bus_bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn worked_lhs() -> BitParallelMatrix {
        BitParallelMatrix::from_rows(&[vec![2, 0], vec![1, 3]], 2, false).unwrap()
    }

    #[test]
    fn decompose_example_operand() {
        let s = decompose(&worked_lhs(), 64).unwrap();
        assert_eq!(s.plane(1), vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(s.plane(0), vec![vec![0, 0], vec![1, 1]]);
        assert_eq!(reconstruct(&s), worked_lhs());
    }

    #[test]
    fn zero_matrix_has_zero_planes() {
        let z = BitParallelMatrix::zeros(3, 5, 4, false).unwrap();
        let s = decompose(&z, 64).unwrap();
        for b in 0..4 {
            assert!(s.plane(b).iter().flatten().all(|&x| x == 0));
        }
    }

    #[test]
    fn signed_two_bit_negative_two() {
        let m = BitParallelMatrix::from_rows(&[vec![-2]], 2, true).unwrap();
        let s = decompose(&m, 64).unwrap();
        assert_eq!(s.plane(1), vec![vec![1]]);
        assert_eq!(s.plane(0), vec![vec![0]]);
        assert_eq!(reconstruct(&s).get(0, 0), -2);
    }

    #[test]
    fn signed_one_bit_ones_are_minus_one() {
        let s = BitSerialMatrix::from_planes(2, 3, 1, true, 64, vec![0b111, 0b111]).unwrap();
        assert!(reconstruct(&s).elems().iter().all(|&v| v == -1));
    }

    #[test]
    fn minus_one_sets_every_plane() {
        for bits in 1..=12 {
            let m = BitParallelMatrix::from_rows(&[vec![-1, -1, -1]], bits, true).unwrap();
            let s = decompose(&m, 8).unwrap();
            for b in 0..bits {
                assert_eq!(s.plane(b), vec![vec![1, 1, 1]]);
            }
        }
    }

    #[test]
    fn out_of_range_names_position() {
        let err = BitParallelMatrix::from_rows(&[vec![0, 1], vec![4, 0]], 2, false).unwrap_err();
        assert!(matches!(err, BitMatrixError::OutOfRange { row: 1, col: 0, value: 4, .. }));
        let err = BitParallelMatrix::from_rows(&[vec![-3]], 2, true).unwrap_err();
        assert!(matches!(err, BitMatrixError::OutOfRange { row: 0, col: 0, .. }));
        let err = BitParallelMatrix::from_rows(&[vec![-1]], 3, false).unwrap_err();
        assert!(matches!(err, BitMatrixError::OutOfRange { .. }));
    }

    #[test]
    fn rejects_bad_shapes_and_widths() {
        assert!(matches!(
            BitParallelMatrix::new(0, 3, 4, false, vec![]),
            Err(BitMatrixError::Empty { .. })
        ));
        assert!(matches!(
            BitParallelMatrix::new(1, 1, 0, false, vec![0]),
            Err(BitMatrixError::InvalidBits { .. })
        ));
        assert!(matches!(
            BitParallelMatrix::new(1, 1, 64, false, vec![0]),
            Err(BitMatrixError::InvalidBits { .. })
        ));
        let m = worked_lhs();
        assert_eq!(decompose(&m, 48).unwrap_err(), BitMatrixError::InvalidWordWidth(48));
        assert_eq!(decompose(&m, 128).unwrap_err(), BitMatrixError::InvalidWordWidth(128));
    }

    #[test]
    fn padding_bits_stay_zero() {
        let m = BitParallelMatrix::new(2, 70, 3, true, vec![-1; 140]).unwrap();
        let s = decompose(&m, 64).unwrap();
        assert_eq!(s.words_per_row(), 2);
        assert_eq!(s.stored_bits(), 3 * 2 * 2 * 64);
        for b in 0..3 {
            for r in 0..2 {
                assert_eq!(s.plane_row(b, r)[1], (1u64 << 6) - 1);
            }
        }
        let dirty = BitSerialMatrix::from_planes(1, 4, 1, false, 8, vec![0x1f]);
        assert!(matches!(dirty, Err(BitMatrixError::DirtyPadding { .. })));
    }

    #[test]
    fn extreme_precisions_round_trip() {
        let m = BitParallelMatrix::from_rows(&[vec![i64::MIN, i64::MAX, 0, -1]], 64, true).unwrap();
        assert_eq!(reconstruct(&decompose(&m, 64).unwrap()), m);
        let u = BitParallelMatrix::from_rows(&[vec![i64::MAX, 0, 1]], 63, false).unwrap();
        assert_eq!(reconstruct(&decompose(&u, 32).unwrap()), u);
    }

    #[test]
    fn required_bits_matches_ranges() {
        assert_eq!(required_bits(&[0], false), 1);
        assert_eq!(required_bits(&[3], false), 2);
        assert_eq!(required_bits(&[4], false), 3);
        assert_eq!(required_bits(&[-1, 0], true), 1);
        assert_eq!(required_bits(&[-2, 1], true), 2);
        assert_eq!(required_bits(&[2], true), 3);
        assert_eq!(required_bits(&[i64::MIN], true), 64);
    }

    #[test]
    fn disjoint_support_planes_add() {
        // With no overlapping set bits there are no carries, so plane-wise OR
        // reconstructs to the element-wise sum.
        let a = BitParallelMatrix::from_rows(&[vec![0b1010, 0b0001], vec![0b0100, 0]], 4, false).unwrap();
        let b = BitParallelMatrix::from_rows(&[vec![0b0101, 0b0110], vec![0b1000, 0b1111]], 4, false).unwrap();
        let (sa, sb) = (decompose(&a, 8).unwrap(), decompose(&b, 8).unwrap());
        let words: Vec<u64> = (0..4)
            .flat_map(|bit| (0..2).map(move |r| (bit, r)))
            .map(|(bit, r)| sa.plane_row(bit, r)[0] | sb.plane_row(bit, r)[0])
            .collect();
        let sum = BitSerialMatrix::from_planes(2, 2, 4, false, 8, words).unwrap();
        let expect: Vec<i64> = a.elems().iter().zip(b.elems()).map(|(x, y)| x + y).collect();
        assert_eq!(reconstruct(&sum).elems(), &expect[..]);
    }

    #[test]
    fn saturated_single_plane_word() {
        let m = BitParallelMatrix::new(1, 64, 1, false, vec![1; 64]).unwrap();
        let bytes = p2s_pack(&m, &LayoutParams::default()).unwrap();
        assert_eq!(bytes, vec![0xff; 8]);
    }

    #[test]
    fn p2s_layout_of_two_by_sixty_four() {
        // 2x64, 4-bit, 64-bit buses: four planes of two one-word rows.
        let lp = LayoutParams::default();
        let elems: Vec<i64> = (0..128).map(|i| (i * 7 % 16) as i64).collect();
        let m = BitParallelMatrix::new(2, 64, 4, false, elems).unwrap();
        let bytes = p2s_pack(&m, &lp).unwrap();
        assert_eq!(bytes.len(), 4 * 2 * 8);
        for b in 0..4usize {
            for r in 0..2usize {
                let word = u64::from_le_bytes(bytes[(b * 2 + r) * 8..][..8].try_into().unwrap());
                for c in 0..64 {
                    assert_eq!((word >> c) & 1, (m.get(r, c) as u64 >> b) & 1);
                }
            }
        }
        // Element (1, 63) only touches bit 63 of the row-1 word in each plane.
        let mut single = vec![0i64; 128];
        single[64 + 63] = 0b1111;
        let one = BitParallelMatrix::new(2, 64, 4, false, single).unwrap();
        let bytes = p2s_pack(&one, &lp).unwrap();
        for b in 0..4usize {
            assert_eq!(&bytes[b * 16..b * 16 + 8], &[0u8; 8]);
            assert_eq!(u64::from_le_bytes(bytes[b * 16 + 8..b * 16 + 16].try_into().unwrap()), 1 << 63);
        }
        assert_eq!(p2s_unpack(&bytes, 2, 64, 4, false, &lp).unwrap(), one);
    }

    #[test]
    fn p2s_pads_columns_with_zeros() {
        let lp = LayoutParams::default();
        let elems: Vec<i64> = (0..210).map(|i| (i % 4) as i64).collect();
        let m = BitParallelMatrix::new(3, 70, 2, false, elems).unwrap();
        let bytes = p2s_pack(&m, &lp).unwrap();
        assert_eq!(bytes.len(), lp.packed_len(3, 70, 2));
        let wide = p2s_unpack(&bytes, 3, 128, 2, false, &lp).unwrap();
        assert_eq!(wide, m.zero_padded(3, 128));
        assert_eq!(p2s_unpack(&bytes, 3, 70, 2, false, &lp).unwrap(), m);
    }

    #[test]
    fn p2s_errors() {
        let lp = LayoutParams::default();
        let m = BitParallelMatrix::zeros(1, 8, 9, false).unwrap();
        assert_eq!(
            p2s_pack(&m, &lp).unwrap_err(),
            BitMatrixError::UnsupportedPrecision { bits: 9, max: 8 }
        );
        assert!(matches!(
            p2s_unpack(&[0u8; 7], 1, 64, 1, false, &lp),
            Err(BitMatrixError::LengthMismatch { expected: 8, actual: 7 })
        ));
        assert_eq!(p2s_unpack(&[0u8; 16], 2, 64, 1, false, &lp).unwrap(), BitParallelMatrix::zeros(2, 64, 1, false).unwrap());
        assert!(LayoutParams::new(48, 64, 8).is_err());
        assert!(LayoutParams::new(64, 4, 8).is_err());
        assert!(LayoutParams::new(64, 64, 65).is_err());
    }

    fn arb_matrix() -> impl Strategy<Value = BitParallelMatrix> {
        (1usize..9, 1usize..80, 1u32..=16, any::<bool>()).prop_flat_map(|(rows, cols, bits, signed)| {
            let (lo, hi) = value_range(bits, signed).unwrap();
            proptest::collection::vec(lo..=hi, rows * cols)
                .prop_map(move |e| BitParallelMatrix::new(rows, cols, bits, signed, e).unwrap())
        })
    }

    proptest! {
        #[test]
        fn decompose_round_trips(m in arb_matrix(), ww in prop::sample::select(vec![8usize, 16, 32, 64])) {
            let s = decompose(&m, ww).unwrap();
            prop_assert_eq!(reconstruct(&s), m);
        }

        #[test]
        fn pack_round_trips(m in arb_matrix(), r in prop::sample::select(vec![8usize, 32, 64, 128])) {
            let lp = LayoutParams::new(64, r, 16).unwrap();
            let bytes = p2s_pack(&m, &lp).unwrap();
            prop_assert_eq!(bytes.len(), lp.packed_len(m.rows(), m.cols(), m.bits()));
            prop_assert_eq!(p2s_unpack(&bytes, m.rows(), m.cols(), m.bits(), m.signed(), &lp).unwrap(), m);
        }
    }
}
