use std::fmt::Write as _;

use thiserror::Error;

use crate::compressor::pipeline_depth;

/// Cycles the execute stage spends beyond the compressor pipeline before a
/// dot product is visible to the controller.
pub const EXECUTE_OVERHEAD: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Parameters of one overlay instance.
#[derive(Debug, Clone, PartialEq)]
pub struct HwConfig {
    pub dm: usize,
    pub dn: usize,
    /// Popcount width in bits; also the width of one matrix-buffer word.
    pub dk: usize,
    /// Depth of each left-hand matrix buffer in `dk`-bit words.
    pub bm: usize,
    pub bn: usize,
    /// Result buffer slots.
    pub br: usize,
    pub acc_bits: u32,
    pub read_bus_bits: usize,
    pub write_bus_bits: usize,
    pub max_precision: u32,
    pub f_clk_hz: f64,
    pub d_pipe: usize,
    pub dma_latency: u64,
    pub fifo_capacity: usize,
    /// Overlap consecutive RunExecutes that are not separated by a sync
    /// instruction, paying the drain only once.
    pub pipelined_execute: bool,
}

impl HwConfig {
    pub fn new(dm: usize, dk: usize, dn: usize) -> Self {
        Self {
            dm,
            dn,
            dk,
            bm: 1024,
            bn: 1024,
            br: 2,
            acc_bits: 32,
            read_bus_bits: 64,
            write_bus_bits: 64,
            max_precision: 8,
            f_clk_hz: 200e6,
            d_pipe: default_d_pipe(dk),
            dma_latency: 16,
            fifo_capacity: 16,
            pipelined_execute: false,
        }
    }

    pub fn with_buffers(mut self, bm: usize, bn: usize) -> Self {
        self.bm = bm;
        self.bn = bn;
        self
    }

    pub fn word_bytes(&self) -> usize {
        self.dk / 8
    }

    pub fn buffer_count(&self) -> usize {
        self.dm + self.dn
    }

    /// Depth of buffer `id`: ids below `dm` are left-hand buffers, the rest
    /// right-hand ones.
    pub fn buffer_depth(&self, id: usize) -> usize {
        if id < self.dm {
            self.bm
        } else {
            self.bn
        }
    }

    /// Bytes written by one RunResult.
    pub fn result_tile_bytes(&self) -> usize {
        self.dm * self.dn * self.acc_bits as usize / 8
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, v) in [
            ("dm", self.dm),
            ("dn", self.dn),
            ("dk", self.dk),
            ("bm", self.bm),
            ("bn", self.bn),
            ("br", self.br),
            ("d_pipe", self.d_pipe),
            ("fifo_capacity", self.fifo_capacity),
        ] {
            if v == 0 {
                return Err(invalid(key, "must be positive"));
            }
        }
        if self.dk % 32 != 0 {
            return Err(invalid("dk", format!("{} is not a multiple of 32", self.dk)));
        }
        for (key, v) in [("read_bus_bits", self.read_bus_bits), ("write_bus_bits", self.write_bus_bits)] {
            if !v.is_power_of_two() || v < 8 {
                return Err(invalid(key, format!("{v} is not a power of two >= 8")));
            }
        }
        if !matches!(self.acc_bits, 8 | 16 | 32 | 64) {
            return Err(invalid("acc_bits", format!("{} is not one of 8, 16, 32, 64", self.acc_bits)));
        }
        if !(1..=64).contains(&self.max_precision) {
            return Err(invalid("max_precision", format!("{} outside 1..=64", self.max_precision)));
        }
        if !(self.f_clk_hz > 0.0 && self.f_clk_hz.is_finite()) {
            return Err(invalid("f_clk", "must be a positive frequency"));
        }
        Ok(())
    }

    /// Set one field from its textual key, as used by config files and
    /// environment overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value
                .trim()
                .parse()
                .map_err(|_| invalid(key, format!("cannot parse `{value}`")))
        }
        let key = key.trim();
        match key {
            "dm" => self.dm = num(key, value)?,
            "dn" => self.dn = num(key, value)?,
            "dk" => {
                self.dk = num(key, value)?;
                self.d_pipe = default_d_pipe(self.dk);
            }
            "bm" => self.bm = num(key, value)?,
            "bn" => self.bn = num(key, value)?,
            "br" => self.br = num(key, value)?,
            "acc_bits" => self.acc_bits = num(key, value)?,
            "read_bus_bits" => self.read_bus_bits = num(key, value)?,
            "write_bus_bits" => self.write_bus_bits = num(key, value)?,
            "max_precision" => self.max_precision = num(key, value)?,
            "f_clk" => self.f_clk_hz = num(key, value)?,
            "d_pipe" => self.d_pipe = num(key, value)?,
            "dma_latency" => self.dma_latency = num(key, value)?,
            "fifo_capacity" => self.fifo_capacity = num(key, value)?,
            "pipelined_execute" => {
                self.pipelined_execute = match value.trim() {
                    "1" | "true" => true,
                    "0" | "false" => false,
                    other => return Err(invalid(key, format!("cannot parse `{other}` as a flag"))),
                }
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Every field as `key=value` lines, readable back through [`HwConfig::set`].
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dm={}", self.dm);
        let _ = writeln!(s, "dn={}", self.dn);
        let _ = writeln!(s, "dk={}", self.dk);
        let _ = writeln!(s, "bm={}", self.bm);
        let _ = writeln!(s, "bn={}", self.bn);
        let _ = writeln!(s, "br={}", self.br);
        let _ = writeln!(s, "acc_bits={}", self.acc_bits);
        let _ = writeln!(s, "read_bus_bits={}", self.read_bus_bits);
        let _ = writeln!(s, "write_bus_bits={}", self.write_bus_bits);
        let _ = writeln!(s, "max_precision={}", self.max_precision);
        let _ = writeln!(s, "f_clk={}", self.f_clk_hz);
        let _ = writeln!(s, "d_pipe={}", self.d_pipe);
        let _ = writeln!(s, "dma_latency={}", self.dma_latency);
        let _ = writeln!(s, "fifo_capacity={}", self.fifo_capacity);
        let _ = writeln!(s, "pipelined_execute={}", self.pipelined_execute as u8);
        s
    }
}

/// Compressor pipeline depth plus [`EXECUTE_OVERHEAD`].
pub fn default_d_pipe(dk: usize) -> usize {
    pipeline_depth(dk.max(1)) + EXECUTE_OVERHEAD
}
