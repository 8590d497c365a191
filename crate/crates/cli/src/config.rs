//! Hardware configuration assembly and run manifests.
//!
//! Layers, lowest precedence first: built-in defaults, a `key=value` file,
//! `BSMM_<KEY>` environment variables, command-line flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bsmm::costmodel::CostConstants;
use bsmm::simulator::{ConfigError, HwConfig};
use clap::Args;

pub const ENV_PREFIX: &str = "BSMM_";

#[derive(Debug, Clone, Default, Args)]
pub struct HwArgs {
    /// key=value file with overlay parameters
    #[arg(long, env = "BSMM_CONFIG", value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dm: Option<usize>,
    #[arg(long)]
    pub dk: Option<usize>,
    #[arg(long)]
    pub dn: Option<usize>,
    /// Left-hand buffer depth in words
    #[arg(long)]
    pub bm: Option<usize>,
    /// Right-hand buffer depth in words
    #[arg(long)]
    pub bn: Option<usize>,
    /// Result buffer slots
    #[arg(long)]
    pub br: Option<usize>,
    #[arg(long)]
    pub acc_bits: Option<u32>,
    #[arg(long)]
    pub max_precision: Option<u32>,
    /// Clock frequency in Hz
    #[arg(long)]
    pub fclk: Option<f64>,
    #[arg(long)]
    pub d_pipe: Option<usize>,
    #[arg(long)]
    pub dma_latency: Option<u64>,
    #[arg(long)]
    pub fifo_capacity: Option<usize>,
    #[arg(long)]
    pub pipelined_execute: bool,
}

impl HwArgs {
    fn flag_pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let mut put = |k: &'static str, x: Option<String>| {
            if let Some(x) = x {
                v.push((k, x));
            }
        };
        put("dm", self.dm.map(|x| x.to_string()));
        put("dk", self.dk.map(|x| x.to_string()));
        put("dn", self.dn.map(|x| x.to_string()));
        put("bm", self.bm.map(|x| x.to_string()));
        put("bn", self.bn.map(|x| x.to_string()));
        put("br", self.br.map(|x| x.to_string()));
        put("acc_bits", self.acc_bits.map(|x| x.to_string()));
        put("max_precision", self.max_precision.map(|x| x.to_string()));
        put("f_clk", self.fclk.map(|x| x.to_string()));
        put("d_pipe", self.d_pipe.map(|x| x.to_string()));
        put("dma_latency", self.dma_latency.map(|x| x.to_string()));
        put("fifo_capacity", self.fifo_capacity.map(|x| x.to_string()));
        put("pipelined_execute", self.pipelined_execute.then(|| "1".to_string()));
        v
    }

    /// Resolve the configuration from all layers.
    pub fn resolve(&self) -> Result<HwConfig> {
        resolve(self.config.as_deref(), |k| std::env::var(k).ok(), &self.flag_pairs())
    }
}

/// Keys accepted by [`HwConfig::set`], in application order.
pub fn hw_keys() -> Vec<String> {
    HwConfig::new(1, 32, 1)
        .to_kv()
        .lines()
        .filter_map(|l| l.split_once('=').map(|(k, _)| k.to_string()))
        .collect()
}

/// Parse `key=value` lines; `#` starts a comment.
pub fn parse_kv(text: &str, path: &Path) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Invalid {
            key: line.to_string(),
            reason: "expected key=value".into(),
        })
        .with_context(|| format!("{}:{}", path.display(), i + 1))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn resolve(file: Option<&Path>, env: impl Fn(&str) -> Option<String>, flags: &[(&str, String)]) -> Result<HwConfig> {
    let keys = hw_keys();
    let mut merged: BTreeMap<String, (String, String)> = BTreeMap::new();
    if let Some(path) = file {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        for (line, k, v) in parse_kv(&text, path)? {
            if !keys.contains(&k) {
                return Err(ConfigError::UnknownKey(k)).with_context(|| format!("{}:{line}", path.display()));
            }
            merged.insert(k, (v, format!("{}:{line}", path.display())));
        }
    }
    for k in &keys {
        let name = format!("{ENV_PREFIX}{}", k.to_uppercase());
        if let Some(v) = env(&name) {
            merged.insert(k.clone(), (v, name));
        }
    }
    for (k, v) in flags {
        merged.insert(k.to_string(), (v.clone(), format!("--{}", k.replace('_', "-"))));
    }
    let mut cfg = HwConfig::new(8, 64, 8);
    for k in &keys {
        if let Some((v, origin)) = merged.get(k) {
            cfg.set(k, v).with_context(|| format!("from {origin}"))?;
        }
    }
    cfg.validate().context("invalid hardware configuration")?;
    Ok(cfg)
}

pub fn load_constants(path: Option<&Path>) -> Result<CostConstants> {
    let mut c = CostConstants::default();
    if let Some(path) = path {
        let text = fs::read_to_string(path).with_context(|| format!("reading constants {}", path.display()))?;
        for (line, k, v) in parse_kv(&text, path)? {
            c.set(&k, &v).with_context(|| format!("{}:{line}", path.display()))?;
        }
    }
    Ok(c)
}

/// Everything needed to rerun a command, echoed as `#` comment lines at the
/// top of text outputs.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(subcommand: &str) -> Self {
        let mut m = Self::default();
        m.add("bsmm", env!("CARGO_PKG_VERSION"));
        m.add("subcommand", subcommand);
        m
    }

    pub fn add(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn path(&mut self, key: &str, p: &Path) -> &mut Self {
        self.add(key, p.display())
    }

    pub fn hw(&mut self, cfg: &HwConfig) -> &mut Self {
        for line in cfg.to_kv().lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.add(&format!("hw.{k}"), v);
            }
        }
        self
    }

    pub fn header(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "# {k}: {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_of(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let owned: Vec<(String, String)> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| owned.iter().find(|(n, _)| n == k).map(|(_, v)| v.clone())
    }

    #[test]
    fn layers_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("hw.cfg");
        fs::write(&file, "# overlay\ndm=4\ndn=3 # trailing\ndma_latency=50\nbm=128\n").unwrap();
        let env = env_of(&[("BSMM_DN", "5"), ("BSMM_DMA_LATENCY", "60")]);
        let cfg = resolve(Some(&file), &env, &[("dma_latency", "70".into())]).unwrap();
        assert_eq!((cfg.dm, cfg.dn, cfg.bm, cfg.dma_latency), (4, 5, 128, 70));
    }

    #[test]
    fn explicit_d_pipe_survives_a_later_dk() {
        let env = env_of(&[("BSMM_D_PIPE", "21")]);
        let cfg = resolve(None, &env, &[("dk", "256".into())]).unwrap();
        assert_eq!((cfg.dk, cfg.d_pipe), (256, 21));
        let cfg = resolve(None, env_of(&[]), &[("dk", "256".into())]).unwrap();
        assert_eq!(cfg.d_pipe, bsmm::simulator::default_d_pipe(256));
    }

    #[test]
    fn file_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("hw.cfg");
        fs::write(&file, "dm=2\nwidth=9\n").unwrap();
        let err = resolve(Some(&file), env_of(&[]), &[]).unwrap_err();
        assert!(format!("{err:#}").contains("hw.cfg:2"), "{err:#}");
        assert!(err.chain().any(|e| e.downcast_ref::<ConfigError>().is_some()));
        fs::write(&file, "dk=48\n").unwrap();
        assert!(resolve(Some(&file), env_of(&[]), &[]).is_err());
    }

    #[test]
    fn manifest_header_lists_config() {
        let mut m = Manifest::new("gemm");
        m.add("seed", 7).hw(&HwConfig::new(2, 64, 2));
        let h = m.header();
        assert!(h.starts_with("# bsmm: "));
        assert!(h.contains("# seed: 7\n"));
        assert!(h.contains("# hw.dk: 64\n"));
    }
}
