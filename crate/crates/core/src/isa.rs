//! Overlay instruction set, static validation and the text program format.
//!
//! A [`Program`] holds one in-order queue per pipeline stage plus a queue for
//! the parallel-to-serial converter. Stages synchronise only through
//! payload-free tokens exchanged by `Wait` and `Signal`.
//!
//! Text records are one instruction per line, `#` starts a comment:
//!
//! ```text
//! F run dram_base=0 block_size_bytes=8 block_offset_bytes=8 block_count=2 buf_offset=0 buf_start=0 buf_range=2 words_per_buffer=1
//! F signal execute
//! E wait fetch
//! E run lhs_offset=0 rhs_offset=0 dot_length=1 negate=0 acc=zero
//! E signal result
//! R wait execute
//! R run dram_base=4096 offset=0
//! P run src_base=0 dst_base=256 rows=2 cols=64 precision=4
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use crate::refgemm::AccMode;
use crate::simulator::HwConfig;

/// Pipeline stage taking part in token synchronisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Fetch,
    Execute,
    Result,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Fetch, Stage::Execute, Stage::Result];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Fetch => "fetch",
            Stage::Execute => "execute",
            Stage::Result => "result",
        }
    }

    pub fn queue(self) -> Queue {
        match self {
            Stage::Fetch => Queue::Fetch,
            Stage::Execute => Queue::Execute,
            Stage::Result => Queue::Result,
        }
    }

    /// Whether `self` and `peer` share a token FIFO.
    pub fn is_peer(self, peer: Stage) -> bool {
        matches!(
            (self, peer),
            (Stage::Fetch, Stage::Execute)
                | (Stage::Execute, Stage::Fetch)
                | (Stage::Execute, Stage::Result)
                | (Stage::Result, Stage::Execute)
        )
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fetch" => Ok(Stage::Fetch),
            "execute" => Ok(Stage::Execute),
            "result" => Ok(Stage::Result),
            other => Err(format!("unknown stage `{other}`")),
        }
    }
}

/// Instruction queue of a [`Program`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Queue {
    Fetch,
    Execute,
    Result,
    P2s,
}

impl Queue {
    pub const ALL: [Queue; 4] = [Queue::P2s, Queue::Fetch, Queue::Execute, Queue::Result];

    pub fn prefix(self) -> char {
        match self {
            Queue::Fetch => 'F',
            Queue::Execute => 'E',
            Queue::Result => 'R',
            Queue::P2s => 'P',
        }
    }

    fn from_prefix(s: &str) -> Option<Self> {
        match s {
            "F" => Some(Queue::Fetch),
            "E" => Some(Queue::Execute),
            "R" => Some(Queue::Result),
            "P" => Some(Queue::P2s),
            _ => None,
        }
    }

    pub fn stage(self) -> Option<Stage> {
        match self {
            Queue::Fetch => Some(Stage::Fetch),
            Queue::Execute => Some(Stage::Execute),
            Queue::Result => Some(Stage::Result),
            Queue::P2s => None,
        }
    }
}

impl fmt::Display for Queue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Queue::Fetch => "fetch",
            Queue::Execute => "execute",
            Queue::Result => "result",
            Queue::P2s => "p2s",
        })
    }
}

/// Strided DRAM read scattered over a range of matrix buffers.
///
/// The fetched byte stream is cut into `dk`-bit words. Runs of
/// `words_per_buffer` consecutive words go to buffers `buf_start`,
/// `buf_start + 1`, ... cycling over `buf_range` buffers; each full cycle
/// advances the write offset by `words_per_buffer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FetchOp {
    pub dram_base: u64,
    pub block_size_bytes: u64,
    /// Distance between the starts of consecutive blocks.
    pub block_offset_bytes: u64,
    pub block_count: u64,
    pub buf_offset: u64,
    pub buf_start: u64,
    pub buf_range: u64,
    pub words_per_buffer: u64,
}

impl FetchOp {
    pub fn total_bytes(&self) -> u64 {
        self.block_size_bytes.saturating_mul(self.block_count)
    }

    /// Number of buffer words written for a `dk`-bit word size.
    pub fn word_count(&self, dk: usize) -> Option<u64> {
        let wb = (dk / 8) as u64;
        (self.total_bytes() % wb == 0).then(|| self.total_bytes() / wb)
    }

    /// Buffer id and offset receiving word `q` of the stream.
    pub fn destination(&self, q: u64) -> (u64, u64) {
        let chunk = q / self.words_per_buffer;
        let buffer = self.buf_start.saturating_add(chunk % self.buf_range);
        let offset = (chunk / self.buf_range)
            .saturating_mul(self.words_per_buffer)
            .saturating_add(q % self.words_per_buffer)
            .saturating_add(self.buf_offset);
        (buffer, offset)
    }

    /// DRAM address of byte `i` of the stream.
    pub fn source_address(&self, i: u64) -> u64 {
        (i / self.block_size_bytes)
            .saturating_mul(self.block_offset_bytes)
            .saturating_add(i % self.block_size_bytes)
            .saturating_add(self.dram_base)
    }
}

/// One binary matrix product step on the DPU array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecOp {
    pub lhs_offset: u64,
    pub rhs_offset: u64,
    pub dot_length: u64,
    pub negate: bool,
    pub acc_mode: AccMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResultOp {
    pub dram_base: u64,
    pub offset: u64,
}

impl ResultOp {
    pub fn address(&self) -> u64 {
        self.dram_base.saturating_add(self.offset)
    }
}

/// Convert a bit-parallel matrix (elements stored in `ceil(M/8)` bytes) into
/// the bit-serial layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct P2sOp {
    pub src_base: u64,
    pub dst_base: u64,
    pub rows: u64,
    pub cols: u64,
    pub precision: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instruction {
    Wait { stage: Stage, fifo: Stage },
    Signal { stage: Stage, fifo: Stage },
    RunFetch(FetchOp),
    RunExecute(ExecOp),
    RunResult(ResultOp),
    RunP2S(P2sOp),
}

impl Instruction {
    /// Queue this instruction belongs to.
    pub fn queue(&self) -> Queue {
        match self {
            Instruction::Wait { stage, .. } | Instruction::Signal { stage, .. } => stage.queue(),
            Instruction::RunFetch(_) => Queue::Fetch,
            Instruction::RunExecute(_) => Queue::Execute,
            Instruction::RunResult(_) => Queue::Result,
            Instruction::RunP2S(_) => Queue::P2s,
        }
    }

    pub fn is_sync(&self) -> bool {
        matches!(self, Instruction::Wait { .. } | Instruction::Signal { .. })
    }

    /// Short mnemonic for traces and timelines.
    pub fn mnemonic(&self) -> String {
        match self {
            Instruction::Wait { fifo, .. } => format!("wait {fifo}"),
            Instruction::Signal { fifo, .. } => format!("signal {fifo}"),
            Instruction::RunFetch(_) => "run fetch".into(),
            Instruction::RunExecute(e) => format!("run execute {}", e.acc_mode),
            Instruction::RunResult(_) => "run result".into(),
            Instruction::RunP2S(_) => "run p2s".into(),
        }
    }
}

/// Structural problem of one instruction in the context of a queue and an
/// overlay instance, or `None` when it is well formed.
pub fn check_instruction(ins: &Instruction, queue: Queue, cfg: &HwConfig) -> Option<String> {
    if ins.queue() != queue {
        return Some(format!("{} instruction placed in the {queue} queue", ins.queue()));
    }
    match *ins {
        Instruction::Wait { stage, fifo } | Instruction::Signal { stage, fifo } => {
            (!stage.is_peer(fifo)).then(|| format!("illegal fifo pair {stage} -> {fifo}"))
        }
        Instruction::RunFetch(f) => check_fetch(&f, cfg),
        Instruction::RunExecute(e) => {
            if e.dot_length == 0 {
                return Some("dot_length must be at least 1".into());
            }
            let lhs_end = e.lhs_offset.saturating_add(e.dot_length);
            if lhs_end > cfg.bm as u64 {
                return Some(format!(
                    "buffer offset out of range: lhs words {}..{lhs_end} exceed depth {}",
                    e.lhs_offset, cfg.bm
                ));
            }
            let rhs_end = e.rhs_offset.saturating_add(e.dot_length);
            if rhs_end > cfg.bn as u64 {
                return Some(format!(
                    "buffer offset out of range: rhs words {}..{rhs_end} exceed depth {}",
                    e.rhs_offset, cfg.bn
                ));
            }
            None
        }
        Instruction::RunResult(_) => None,
        Instruction::RunP2S(p) => {
            if p.precision == 0 || p.precision > cfg.max_precision as u64 {
                Some(format!("precision {} outside 1..={}", p.precision, cfg.max_precision))
            } else if p.rows == 0 || p.cols == 0 {
                Some("p2s matrix must have at least one row and one column".into())
            } else if p.rows.checked_mul(p.cols).and_then(|n| n.checked_mul(p.precision)).is_none() {
                Some("p2s matrix size overflows".into())
            } else {
                None
            }
        }
    }
}

fn check_fetch(f: &FetchOp, cfg: &HwConfig) -> Option<String> {
    if f.words_per_buffer == 0 {
        return Some("words_per_buffer must be at least 1".into());
    }
    if f.buf_range == 0 {
        return Some("buf_range must be at least 1".into());
    }
    if f.block_size_bytes == 0 || f.block_count == 0 {
        return Some("fetch must move at least one block of at least one byte".into());
    }
    let buffers = cfg.buffer_count() as u64;
    let buf_end = f.buf_start.saturating_add(f.buf_range);
    if f.buf_start >= buffers || buf_end > buffers {
        return Some(format!(
            "buffer index out of range: buffers {}..{buf_end} exceed {buffers}",
            f.buf_start
        ));
    }
    if f.block_size_bytes.checked_mul(f.block_count).is_none() {
        return Some("fetch size overflows".into());
    }
    let Some(words) = f.word_count(cfg.dk) else {
        return Some(format!(
            "fetched {} bytes is not a whole number of {}-byte words",
            f.total_bytes(),
            cfg.word_bytes()
        ));
    };
    let chunks = words.div_ceil(f.words_per_buffer);
    for k in 0..f.buf_range.min(chunks) {
        let buffer = f.buf_start + k;
        let received = chunks / f.buf_range + u64::from(k < chunks % f.buf_range);
        if received == 0 {
            continue;
        }
        let last_chunk = k + (received - 1) * f.buf_range;
        let words_in_last = (words - last_chunk * f.words_per_buffer).min(f.words_per_buffer);
        let end = (received - 1)
            .saturating_mul(f.words_per_buffer)
            .saturating_add(words_in_last)
            .saturating_add(f.buf_offset);
        let depth = cfg.buffer_depth(buffer as usize) as u64;
        if end > depth {
            return Some(format!(
                "buffer offset out of range: buffer {buffer} written up to word {end} of {depth}"
            ));
        }
    }
    None
}

/// Instruction queues of one program.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    pub fetch: Vec<Instruction>,
    pub execute: Vec<Instruction>,
    pub result: Vec<Instruction>,
    pub p2s: Vec<Instruction>,
}

impl Program {
    pub fn queue(&self, q: Queue) -> &[Instruction] {
        match q {
            Queue::Fetch => &self.fetch,
            Queue::Execute => &self.execute,
            Queue::Result => &self.result,
            Queue::P2s => &self.p2s,
        }
    }

    pub fn queue_mut(&mut self, q: Queue) -> &mut Vec<Instruction> {
        match q {
            Queue::Fetch => &mut self.fetch,
            Queue::Execute => &mut self.execute,
            Queue::Result => &mut self.result,
            Queue::P2s => &mut self.p2s,
        }
    }

    /// Append to the queue the instruction belongs to.
    pub fn push(&mut self, ins: Instruction) {
        self.queue_mut(ins.queue()).push(ins);
    }

    pub fn is_empty(&self) -> bool {
        Queue::ALL.iter().all(|&q| self.queue(q).is_empty())
    }

    pub fn len(&self) -> usize {
        Queue::ALL.iter().map(|&q| self.queue(q).len()).sum()
    }

    /// Queue lengths as `(fetch, execute, result)`.
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.fetch.len(), self.execute.len(), self.result.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub queue: Queue,
    /// Position in the queue, `None` for whole-program findings.
    pub index: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match self.index {
            Some(i) => write!(f, "{sev}: {} queue #{i}: {}", self.queue, self.message),
            None => write!(f, "{sev}: {} queue: {}", self.queue, self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TokenCount {
    pub signals: usize,
    pub waits: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
    /// Token totals per `(producer, consumer)` FIFO.
    pub tokens: BTreeMap<(Stage, Stage), TokenCount>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Warning)
    }
}

/// Static structural checks plus per-FIFO token accounting.
pub fn validate(p: &Program, cfg: &HwConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    for a in Stage::ALL {
        for b in Stage::ALL {
            if a.is_peer(b) {
                report.tokens.insert((a, b), TokenCount::default());
            }
        }
    }
    for q in Queue::ALL {
        for (i, ins) in p.queue(q).iter().enumerate() {
            if let Some(message) = check_instruction(ins, q, cfg) {
                report.diagnostics.push(Diagnostic {
                    severity: Severity::Error,
                    queue: q,
                    index: Some(i),
                    message,
                });
                continue;
            }
            match *ins {
                Instruction::Signal { stage, fifo } => {
                    report.tokens.entry((stage, fifo)).or_default().signals += 1;
                }
                Instruction::Wait { stage, fifo } => {
                    report.tokens.entry((fifo, stage)).or_default().waits += 1;
                }
                _ => {}
            }
        }
    }
    for (&(from, to), t) in &report.tokens {
        if t.waits > t.signals {
            report.diagnostics.push(Diagnostic {
                severity: Severity::Warning,
                queue: to.queue(),
                index: None,
                message: format!(
                    "{} waits on {from} but only {} signals: the {to} stage will block",
                    t.waits, t.signals
                ),
            });
        } else if t.signals - t.waits > cfg.fifo_capacity {
            report.diagnostics.push(Diagnostic {
                severity: Severity::Warning,
                queue: from.queue(),
                index: None,
                message: format!(
                    "{} unconsumed tokens {from} -> {to} exceed fifo capacity {}",
                    t.signals - t.waits,
                    cfg.fifo_capacity
                ),
            });
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {}{message}", field.as_ref().map(|f| format!("field `{f}`: ")).unwrap_or_default())]
pub struct DecodeError {
    pub line: usize,
    pub field: Option<String>,
    pub message: String,
}

fn field_list(ins: &Instruction) -> Vec<(&'static str, String)> {
    match *ins {
        Instruction::RunFetch(f) => vec![
            ("dram_base", f.dram_base.to_string()),
            ("block_size_bytes", f.block_size_bytes.to_string()),
            ("block_offset_bytes", f.block_offset_bytes.to_string()),
            ("block_count", f.block_count.to_string()),
            ("buf_offset", f.buf_offset.to_string()),
            ("buf_start", f.buf_start.to_string()),
            ("buf_range", f.buf_range.to_string()),
            ("words_per_buffer", f.words_per_buffer.to_string()),
        ],
        Instruction::RunExecute(e) => vec![
            ("lhs_offset", e.lhs_offset.to_string()),
            ("rhs_offset", e.rhs_offset.to_string()),
            ("dot_length", e.dot_length.to_string()),
            ("negate", u8::from(e.negate).to_string()),
            ("acc", e.acc_mode.to_string()),
        ],
        Instruction::RunResult(r) => vec![("dram_base", r.dram_base.to_string()), ("offset", r.offset.to_string())],
        Instruction::RunP2S(p) => vec![
            ("src_base", p.src_base.to_string()),
            ("dst_base", p.dst_base.to_string()),
            ("rows", p.rows.to_string()),
            ("cols", p.cols.to_string()),
            ("precision", p.precision.to_string()),
        ],
        Instruction::Wait { .. } | Instruction::Signal { .. } => Vec::new(),
    }
}

/// One text record, without a trailing newline.
pub fn encode_instruction(ins: &Instruction) -> String {
    let prefix = ins.queue().prefix();
    match ins {
        Instruction::Wait { fifo, .. } => format!("{prefix} wait {fifo}"),
        Instruction::Signal { fifo, .. } => format!("{prefix} signal {fifo}"),
        _ => {
            let fields: Vec<String> = field_list(ins).into_iter().map(|(k, v)| format!("{k}={v}")).collect();
            format!("{prefix} run {}", fields.join(" "))
        }
    }
}

/// Queues are written in the order P2S, fetch, execute, result.
pub fn encode(p: &Program) -> String {
    let mut out = String::new();
    for q in Queue::ALL {
        for ins in p.queue(q) {
            out.push_str(&encode_instruction(ins));
            out.push('\n');
        }
    }
    out
}

struct Fields<'a> {
    line: usize,
    values: BTreeMap<&'a str, &'a str>,
}

impl<'a> Fields<'a> {
    fn parse(line: usize, tokens: &[&'a str], expected: &[&str]) -> Result<Self, DecodeError> {
        let mut values = BTreeMap::new();
        for tok in tokens {
            let (k, v) = tok.split_once('=').ok_or_else(|| DecodeError {
                line,
                field: None,
                message: format!("expected key=value, found `{tok}`"),
            })?;
            if !expected.contains(&k) {
                return Err(DecodeError {
                    line,
                    field: Some(k.to_string()),
                    message: "unknown field".into(),
                });
            }
            if values.insert(k, v).is_some() {
                return Err(DecodeError {
                    line,
                    field: Some(k.to_string()),
                    message: "duplicate field".into(),
                });
            }
        }
        if let Some(missing) = expected.iter().find(|k| !values.contains_key(*k)) {
            return Err(DecodeError {
                line,
                field: Some(missing.to_string()),
                message: "missing field".into(),
            });
        }
        Ok(Self { line, values })
    }

    fn err(&self, key: &str, message: String) -> DecodeError {
        DecodeError {
            line: self.line,
            field: Some(key.to_string()),
            message,
        }
    }

    fn num(&self, key: &str) -> Result<u64, DecodeError> {
        let v = self.values[key];
        let parsed = match v.strip_prefix("0x") {
            Some(hex) => u64::from_str_radix(hex, 16),
            None => v.parse(),
        };
        parsed.map_err(|_| self.err(key, format!("`{v}` is not an unsigned integer")))
    }

    fn flag(&self, key: &str) -> Result<bool, DecodeError> {
        match self.values[key] {
            "0" => Ok(false),
            "1" => Ok(true),
            v => Err(self.err(key, format!("`{v}` is not 0 or 1"))),
        }
    }

    fn acc(&self, key: &str) -> Result<AccMode, DecodeError> {
        self.values[key].parse().map_err(|m| self.err(key, m))
    }
}

const FETCH_FIELDS: [&str; 8] = [
    "dram_base",
    "block_size_bytes",
    "block_offset_bytes",
    "block_count",
    "buf_offset",
    "buf_start",
    "buf_range",
    "words_per_buffer",
];
const EXEC_FIELDS: [&str; 5] = ["lhs_offset", "rhs_offset", "dot_length", "negate", "acc"];
const RESULT_FIELDS: [&str; 2] = ["dram_base", "offset"];
const P2S_FIELDS: [&str; 5] = ["src_base", "dst_base", "rows", "cols", "precision"];

fn decode_line(line: usize, text: &str) -> Result<Option<Instruction>, DecodeError> {
    let body = text.split('#').next().unwrap_or("").trim();
    if body.is_empty() {
        return Ok(None);
    }
    let tokens: Vec<&str> = body.split_whitespace().collect();
    let err = |message: String| DecodeError {
        line,
        field: None,
        message,
    };
    let queue = Queue::from_prefix(tokens[0]).ok_or_else(|| err(format!("unknown queue prefix `{}`", tokens[0])))?;
    let op = *tokens.get(1).ok_or_else(|| err("missing operation".into()))?;
    let rest = &tokens[2..];
    let ins = match op {
        "wait" | "signal" => {
            let stage = queue
                .stage()
                .ok_or_else(|| err(format!("the {queue} queue has no synchronisation instructions")))?;
            let [peer] = rest else {
                return Err(err(format!("`{op}` takes exactly one peer stage")));
            };
            let fifo: Stage = peer.parse().map_err(|m| DecodeError {
                line,
                field: Some("fifo".into()),
                message: m,
            })?;
            if op == "wait" {
                Instruction::Wait { stage, fifo }
            } else {
                Instruction::Signal { stage, fifo }
            }
        }
        "run" => match queue {
            Queue::Fetch => {
                let f = Fields::parse(line, rest, &FETCH_FIELDS)?;
                Instruction::RunFetch(FetchOp {
                    dram_base: f.num("dram_base")?,
                    block_size_bytes: f.num("block_size_bytes")?,
                    block_offset_bytes: f.num("block_offset_bytes")?,
                    block_count: f.num("block_count")?,
                    buf_offset: f.num("buf_offset")?,
                    buf_start: f.num("buf_start")?,
                    buf_range: f.num("buf_range")?,
                    words_per_buffer: f.num("words_per_buffer")?,
                })
            }
            Queue::Execute => {
                let f = Fields::parse(line, rest, &EXEC_FIELDS)?;
                Instruction::RunExecute(ExecOp {
                    lhs_offset: f.num("lhs_offset")?,
                    rhs_offset: f.num("rhs_offset")?,
                    dot_length: f.num("dot_length")?,
                    negate: f.flag("negate")?,
                    acc_mode: f.acc("acc")?,
                })
            }
            Queue::Result => {
                let f = Fields::parse(line, rest, &RESULT_FIELDS)?;
                Instruction::RunResult(ResultOp {
                    dram_base: f.num("dram_base")?,
                    offset: f.num("offset")?,
                })
            }
            Queue::P2s => {
                let f = Fields::parse(line, rest, &P2S_FIELDS)?;
                Instruction::RunP2S(P2sOp {
                    src_base: f.num("src_base")?,
                    dst_base: f.num("dst_base")?,
                    rows: f.num("rows")?,
                    cols: f.num("cols")?,
                    precision: f.num("precision")?,
                })
            }
        },
        other => return Err(err(format!("unknown operation `{other}`"))),
    };
    Ok(Some(ins))
}

pub fn decode(text: &str) -> Result<Program, DecodeError> {
    let mut p = Program::default();
    for (i, line) in text.lines().enumerate() {
        if let Some(ins) = decode_line(i + 1, line)? {
            p.push(ins);
        }
    }
    Ok(p)
}
