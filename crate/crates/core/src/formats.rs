//! Matrix file formats.
//!
//! * CSV: one matrix row per line, comma separated integers.
//! * Raw binary: row-major little-endian elements of `ceil(bits / 8)` bytes
//!   each, with shape and precision in a `key=value` sidecar file
//!   (`<path>.hdr`).
//! * BSMX: a bit-serial container. Header (little endian): magic `BSMX`,
//!   version `u16`, rows `u32`, cols `u32`, bits `u8`, signed `u8`, word
//!   width `u16`, followed by the bit planes as laid out by
//!   [`pack_planes`](crate::bitmatrix::pack_planes).

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::bitmatrix::{pack_planes, required_bits, unpack_planes, BitMatrixError, BitParallelMatrix};

pub const BSMX_MAGIC: &[u8; 4] = b"BSMX";
pub const BSMX_VERSION: u16 = 1;
const BSMX_HEADER_LEN: usize = 18;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}")]
    Matrix {
        path: PathBuf,
        #[source]
        source: BitMatrixError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn matrix_err(path: &Path) -> impl FnOnce(BitMatrixError) -> FormatError + '_ {
    move |source| FormatError::Matrix {
        path: path.to_path_buf(),
        source,
    }
}

/// On-disk representation of a matrix file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Raw,
    Bsmx,
}

impl MatrixFormat {
    /// Guess from the extension: `.csv`, `.bsmx`; anything else is raw.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            Some(e) if e.eq_ignore_ascii_case("bsmx") => MatrixFormat::Bsmx,
            _ => MatrixFormat::Raw,
        }
    }
}

pub fn parse_csv(text: &str, path: &Path) -> Result<Vec<Vec<i64>>, FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let row = rec
            .iter()
            .map(|f| f.parse::<i64>().map_err(|_| parse_err(path, line, format!("`{f}` is not an integer"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Build a matrix from parsed rows, inferring the precision when `bits` is
/// `None`.
pub fn rows_to_matrix(rows: &[Vec<i64>], bits: Option<u32>, signed: bool, path: &Path) -> Result<BitParallelMatrix, FormatError> {
    let flat: Vec<i64> = rows.iter().flatten().copied().collect();
    let bits = bits.unwrap_or_else(|| required_bits(&flat, signed));
    BitParallelMatrix::from_rows(rows, bits, signed).map_err(matrix_err(path))
}

pub fn read_csv(path: &Path, bits: Option<u32>, signed: bool) -> Result<BitParallelMatrix, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    rows_to_matrix(&parse_csv(&text, path)?, bits, signed, path)
}

pub fn csv_string(rows: &[Vec<i64>]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("writing integers to memory cannot fail");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is ascii")
}

pub fn write_csv(path: &Path, rows: &[Vec<i64>]) -> Result<(), FormatError> {
    fs::write(path, csv_string(rows)).map_err(io_err(path))
}

pub fn element_bytes(bits: u32) -> usize {
    bits.div_ceil(8) as usize
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

pub fn raw_bytes(m: &BitParallelMatrix) -> Vec<u8> {
    let eb = element_bytes(m.bits());
    m.elems().iter().flat_map(|v| v.to_le_bytes()[..eb].to_vec()).collect()
}

pub fn write_raw(path: &Path, m: &BitParallelMatrix) -> Result<(), FormatError> {
    fs::write(path, raw_bytes(m)).map_err(io_err(path))?;
    let hdr = format!("rows={}\ncols={}\nbits={}\nsigned={}\n", m.rows(), m.cols(), m.bits(), m.signed() as u8);
    let side = sidecar_path(path);
    fs::write(&side, hdr).map_err(io_err(&side))
}

pub fn read_raw(path: &Path) -> Result<BitParallelMatrix, FormatError> {
    let side = sidecar_path(path);
    let hdr = fs::read_to_string(&side).map_err(io_err(&side))?;
    let (mut rows, mut cols, mut bits, mut signed) = (None, None, None, false);
    for (i, line) in hdr.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(&side, i + 1, "expected key=value"))?;
        let num = |v: &str| v.trim().parse::<u64>().map_err(|_| parse_err(&side, i + 1, format!("bad value `{v}`")));
        match k.trim() {
            "rows" => rows = Some(num(v)? as usize),
            "cols" => cols = Some(num(v)? as usize),
            "bits" => bits = Some(num(v)? as u32),
            "signed" => signed = num(v)? != 0,
            other => return Err(parse_err(&side, i + 1, format!("unknown key `{other}`"))),
        }
    }
    let missing = |k: &str| parse_err(&side, 0, format!("missing `{k}`"));
    let (rows, cols, bits) = (rows.ok_or_else(|| missing("rows"))?, cols.ok_or_else(|| missing("cols"))?, bits.ok_or_else(|| missing("bits"))?);
    let data = fs::read(path).map_err(io_err(path))?;
    raw_to_matrix(&data, rows, cols, bits, signed).map_err(matrix_err(path))
}

pub fn raw_to_matrix(data: &[u8], rows: usize, cols: usize, bits: u32, signed: bool) -> Result<BitParallelMatrix, BitMatrixError> {
    let eb = element_bytes(bits);
    let expected = rows * cols * eb;
    if data.len() != expected {
        return Err(BitMatrixError::LengthMismatch {
            expected,
            actual: data.len(),
        });
    }
    let shift = 64 - 8 * eb as u32;
    let elems = data
        .chunks(eb)
        .map(|c| {
            let mut b = [0u8; 8];
            b[..eb].copy_from_slice(c);
            let v = u64::from_le_bytes(b);
            if signed {
                ((v << shift) as i64) >> shift
            } else {
                v as i64
            }
        })
        .collect();
    BitParallelMatrix::new(rows, cols, bits, signed, elems)
}

pub fn bsmx_bytes(m: &BitParallelMatrix, word_width: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(BSMX_HEADER_LEN);
    out.extend_from_slice(BSMX_MAGIC);
    out.extend_from_slice(&BSMX_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    out.push(m.bits() as u8);
    out.push(m.signed() as u8);
    out.extend_from_slice(&(word_width as u16).to_le_bytes());
    out.extend_from_slice(&pack_planes(m, word_width));
    out
}

/// Header fields of a BSMX file: `(rows, cols, bits, signed, word_width)`.
pub fn bsmx_header(data: &[u8]) -> Result<(usize, usize, u32, bool, usize), String> {
    if data.len() < BSMX_HEADER_LEN || &data[..4] != BSMX_MAGIC {
        return Err("not a BSMX file".into());
    }
    let u16_at = |i: usize| u16::from_le_bytes([data[i], data[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(data[i..i + 4].try_into().expect("4 bytes"));
    let version = u16_at(4);
    if version != BSMX_VERSION {
        return Err(format!("unsupported BSMX version {version}"));
    }
    Ok((u32_at(6) as usize, u32_at(10) as usize, data[14] as u32, data[15] != 0, u16_at(16) as usize))
}

pub fn bsmx_to_matrix(data: &[u8]) -> Result<BitParallelMatrix, String> {
    let (rows, cols, bits, signed, ww) = bsmx_header(data)?;
    if !ww.is_power_of_two() || !(8..=64).contains(&ww) {
        return Err(format!("invalid word width {ww}"));
    }
    unpack_planes(&data[BSMX_HEADER_LEN..], rows, cols, bits, signed, ww).map_err(|e| e.to_string())
}

pub fn write_bsmx(path: &Path, m: &BitParallelMatrix, word_width: usize) -> Result<(), FormatError> {
    fs::write(path, bsmx_bytes(m, word_width)).map_err(io_err(path))
}

pub fn read_bsmx(path: &Path) -> Result<BitParallelMatrix, FormatError> {
    let data = fs::read(path).map_err(io_err(path))?;
    bsmx_to_matrix(&data).map_err(|m| parse_err(path, 0, m))
}

/// Read any supported matrix file. `bits` and `signed` only apply to CSV.
pub fn read_matrix(path: &Path, bits: Option<u32>, signed: bool) -> Result<BitParallelMatrix, FormatError> {
    match MatrixFormat::from_path(path) {
        MatrixFormat::Csv => read_csv(path, bits, signed),
        MatrixFormat::Raw => read_raw(path),
        MatrixFormat::Bsmx => read_bsmx(path),
    }
}
