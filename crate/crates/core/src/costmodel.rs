//! Analytical LUT, BRAM and throughput estimates for an overlay instance.
//!
//! LUTs: `lut_total = lut_base + Dm * Dn * (alpha * Dk + beta + lut_res)`,
//! with `lut_base = lut_base_fr + lut_base_p2s` when the P2S block is built.
//!
//! BRAMs: `bram_total = bram_base + ceil(Dk / 32) * (Dm * ceil(Bm / 1024) + Dn * ceil(Bn / 1024))`.

use std::fmt::Write as _;

use crate::simulator::{ConfigError, HwConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostConstants {
    /// LUTs per popcount bit of one DPU.
    pub alpha_dpu: f64,
    /// Fixed LUTs per DPU.
    pub beta_dpu: f64,
    /// Result-path LUTs per DPU.
    pub lut_res: f64,
    /// Fetch and result stage LUTs independent of the array size.
    pub lut_base_fr: f64,
    /// P2S accelerator LUTs at 8-bit maximum precision.
    pub lut_base_p2s: f64,
    pub bram_base: f64,
    /// DPU line of the earlier design, for comparisons.
    pub legacy_alpha: f64,
    pub legacy_beta: f64,
}

impl Default for CostConstants {
    fn default() -> Self {
        Self {
            alpha_dpu: 1.17,
            beta_dpu: 44.1,
            lut_res: 120.1,
            lut_base_fr: 718.0,
            lut_base_p2s: 929.0,
            bram_base: 1.0,
            legacy_alpha: 2.04,
            legacy_beta: 109.0,
        }
    }
}

impl CostConstants {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v: f64 = value.trim().parse().map_err(|_| ConfigError::Invalid {
            key: key.to_string(),
            reason: format!("cannot parse `{value}`"),
        })?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(ConfigError::Invalid {
                key: key.to_string(),
                reason: "must be a non-negative number".into(),
            });
        }
        let slot = match key.trim() {
            "alpha_dpu" => &mut self.alpha_dpu,
            "beta_dpu" => &mut self.beta_dpu,
            "lut_res" => &mut self.lut_res,
            "lut_base_fr" => &mut self.lut_base_fr,
            "lut_base_p2s" => &mut self.lut_base_p2s,
            "bram_base" => &mut self.bram_base,
            "legacy_alpha" => &mut self.legacy_alpha,
            "legacy_beta" => &mut self.legacy_beta,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        };
        *slot = v;
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        format!(
            "alpha_dpu={}\nbeta_dpu={}\nlut_res={}\nlut_base_fr={}\nlut_base_p2s={}\nbram_base={}\nlegacy_alpha={}\nlegacy_beta={}\n",
            self.alpha_dpu,
            self.beta_dpu,
            self.lut_res,
            self.lut_base_fr,
            self.lut_base_p2s,
            self.bram_base,
            self.legacy_alpha,
            self.legacy_beta
        )
    }

    /// LUTs of one DPU.
    pub fn dpu_luts(&self, dk: usize) -> f64 {
        self.alpha_dpu * dk as f64 + self.beta_dpu
    }

    pub fn legacy_dpu_luts(&self, dk: usize) -> f64 {
        self.legacy_alpha * dk as f64 + self.legacy_beta
    }

    /// DPU LUTs per binary operation and cycle (`2 * Dk` operations).
    pub fn dpu_luts_per_op(&self, dk: usize) -> f64 {
        self.dpu_luts(dk) / (2.0 * dk as f64)
    }

    pub fn legacy_dpu_luts_per_op(&self, dk: usize) -> f64 {
        self.legacy_dpu_luts(dk) / (2.0 * dk as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub lut_total: f64,
    pub lut_array: f64,
    pub lut_dpu: f64,
    pub lut_base: f64,
    pub bram_total: f64,
    pub bram_array: f64,
    pub peak_binary_ops_per_cycle: f64,
    pub peak_gops: f64,
}

impl CostReport {
    pub fn luts_per_op(&self) -> f64 {
        self.lut_total / self.peak_binary_ops_per_cycle
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "lut_total={:.2}", self.lut_total);
        let _ = writeln!(s, "lut_array={:.2}", self.lut_array);
        let _ = writeln!(s, "lut_dpu={:.2}", self.lut_dpu);
        let _ = writeln!(s, "lut_base={:.2}", self.lut_base);
        let _ = writeln!(s, "bram_total={}", self.bram_total);
        let _ = writeln!(s, "bram_array={}", self.bram_array);
        let _ = writeln!(s, "peak_binary_ops_per_cycle={}", self.peak_binary_ops_per_cycle);
        let _ = writeln!(s, "peak_gops={:.1}", self.peak_gops);
        s
    }
}

/// LUT part of the estimate: `(lut_dpu, lut_array, lut_base, lut_total)`.
pub fn lut_cost(cfg: &HwConfig, c: &CostConstants, include_p2s: bool) -> (f64, f64, f64, f64) {
    let lut_dpu = c.dpu_luts(cfg.dk);
    let lut_array = (cfg.dm * cfg.dn) as f64 * (lut_dpu + c.lut_res);
    let lut_base = c.lut_base_fr + if include_p2s { c.lut_base_p2s } else { 0.0 };
    (lut_dpu, lut_array, lut_base, lut_base + lut_array)
}

/// BRAM part of the estimate: `(bram_array, bram_total)`.
pub fn bram_cost(cfg: &HwConfig, c: &CostConstants) -> (f64, f64) {
    let per_buffer = cfg.dk.div_ceil(32);
    let array = per_buffer * (cfg.dm * cfg.bm.div_ceil(1024) + cfg.dn * cfg.bn.div_ceil(1024));
    (array as f64, c.bram_base + array as f64)
}

pub fn peak_ops_per_cycle(cfg: &HwConfig) -> f64 {
    2.0 * (cfg.dm * cfg.dn * cfg.dk) as f64
}

/// Peak throughput in billions of binary operations per second.
pub fn peak_gops(cfg: &HwConfig) -> f64 {
    peak_ops_per_cycle(cfg) * cfg.f_clk_hz / 1e9
}

pub fn estimate(cfg: &HwConfig, c: &CostConstants, include_p2s: bool) -> CostReport {
    let (lut_dpu, lut_array, lut_base, lut_total) = lut_cost(cfg, c, include_p2s);
    let (bram_array, bram_total) = bram_cost(cfg, c);
    CostReport {
        lut_total,
        lut_array,
        lut_dpu,
        lut_base,
        bram_total,
        bram_array,
        peak_binary_ops_per_cycle: peak_ops_per_cycle(cfg),
        peak_gops: peak_gops(cfg),
    }
}

pub fn sweep(configs: &[HwConfig], c: &CostConstants, include_p2s: bool) -> Vec<(HwConfig, CostReport)> {
    configs.iter().map(|cfg| (cfg.clone(), estimate(cfg, c, include_p2s))).collect()
}

pub const SWEEP_CSV_HEADER: &str = "dm,dk,dn,bm,bn,f_clk,lut_total,lut_array,lut_base,luts_per_op,bram_total,peak_gops";

pub fn sweep_csv(rows: &[(HwConfig, CostReport)]) -> String {
    let mut s = String::from(SWEEP_CSV_HEADER);
    s.push('\n');
    for (cfg, r) in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{:.2},{:.2},{:.2},{:.6},{},{:.3}",
            cfg.dm,
            cfg.dk,
            cfg.dn,
            cfg.bm,
            cfg.bn,
            cfg.f_clk_hz,
            r.lut_total,
            r.lut_array,
            r.lut_base,
            r.luts_per_op(),
            r.bram_total,
            r.peak_gops
        );
    }
    s
}

/// A synthesized instance with its measured resources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredInstance {
    pub dm: usize,
    pub dk: usize,
    pub dn: usize,
    pub luts: u32,
    pub brams: u32,
    pub fmax_mhz: f64,
    pub gops: f64,
}

impl MeasuredInstance {
    pub fn config(&self) -> HwConfig {
        let mut c = HwConfig::new(self.dm, self.dk, self.dn);
        c.f_clk_hz = self.fmax_mhz * 1e6;
        c
    }
}

const fn inst(dm: usize, dk: usize, dn: usize, luts: u32, brams: u32, fmax_mhz: f64, gops: f64) -> MeasuredInstance {
    MeasuredInstance {
        dm,
        dk,
        dn,
        luts,
        brams,
        fmax_mhz,
        gops,
    }
}

/// Seven Ultra96 instances with Bm = Bn = 1024 and F = R = 64.
pub const ULTRA96_INSTANCES: [MeasuredInstance; 7] = [
    inst(4, 256, 4, 12_657, 65, 313.19, 2_565.6),
    inst(8, 256, 4, 19_613, 97, 323.31, 5_297.1),
    inst(8, 256, 8, 33_418, 129, 309.89, 10_154.3),
    inst(10, 128, 10, 34_252, 81, 306.84, 7_855.2),
    inst(12, 256, 6, 36_879, 145, 302.39, 11_147.3),
    inst(12, 128, 12, 46_847, 97, 281.85, 10_390.1),
    inst(10, 256, 10, 50_734, 161, 311.53, 15_950.2),
];

/// Relative LUT error `(predicted - actual) / actual` per measured instance.
pub fn lut_errors(instances: &[MeasuredInstance], c: &CostConstants, include_p2s: bool) -> Vec<f64> {
    instances
        .iter()
        .map(|m| {
            let (_, _, _, total) = lut_cost(&m.config(), c, include_p2s);
            (total - m.luts as f64) / m.luts as f64
        })
        .collect()
}

pub fn mean_abs(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x.abs()).sum::<f64>() / xs.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dm: usize, dk: usize, dn: usize) -> HwConfig {
        HwConfig::new(dm, dk, dn)
    }

    #[test]
    fn dpu_line() {
        let c = CostConstants::default();
        assert!((c.dpu_luts(256) - 343.62).abs() < 1e-9);
        let (_, _, base, total) = lut_cost(&cfg(0, 256, 0), &c, true);
        assert_eq!(base, total);
        let (_, _, _, t) = lut_cost(&cfg(8, 256, 8), &c, true);
        assert!((t - (64.0 * 463.72 + 1647.0)).abs() < 1e-6);
        let (_, _, base, _) = lut_cost(&cfg(8, 256, 8), &c, false);
        assert_eq!(base, 718.0);
    }

    #[test]
    fn bram_examples() {
        let c = CostConstants::default();
        assert_eq!(bram_cost(&cfg(4, 256, 4), &c).1, 65.0);
        assert_eq!(bram_cost(&cfg(10, 128, 10), &c).1, 81.0);
        assert_eq!(bram_cost(&cfg(10, 256, 10), &c).1, 161.0);
        assert_eq!(bram_cost(&cfg(4, 256, 4).with_buffers(2048, 1024), &c).1, 65.0 + 32.0);
    }

    #[test]
    fn peak_examples() {
        let mut a = cfg(10, 256, 10);
        a.f_clk_hz = 311.53e6;
        assert!((peak_gops(&a) - 15_950.2).abs() / 15_950.2 < 5e-4);
        let mut b = cfg(8, 256, 8);
        b.f_clk_hz = 300e6;
        assert!((peak_gops(&b) - 9_830.4).abs() < 1e-6);
        let mut one = cfg(1, 32, 1);
        one.dk = 1;
        one.f_clk_hz = 1.0;
        assert_eq!(peak_ops_per_cycle(&one) * one.f_clk_hz, 2.0);
    }

    #[test]
    fn constants_round_trip() {
        let mut c = CostConstants::default();
        c.set("lut_res", "99.5").unwrap();
        let mut d = CostConstants::default();
        for line in c.to_kv().lines() {
            let (k, v) = line.split_once('=').unwrap();
            d.set(k, v).unwrap();
        }
        assert_eq!(c, d);
        assert!(d.set("alpha_dpu", "-1").is_err());
        assert!(d.set("nope", "1").is_err());
    }

    #[test]
    fn equal_throughput_tradeoff() {
        let c = CostConstants::default();
        let cfgs: Vec<HwConfig> = [(2, 1024, 2), (4, 256, 4), (8, 64, 8)]
            .iter()
            .map(|&(m, k, n)| {
                let mut x = cfg(m, k, n);
                x.f_clk_hz = 300e6;
                x
            })
            .collect();
        let rows = sweep(&cfgs, &c, true);
        for w in rows.windows(2) {
            assert_eq!(w[0].1.peak_gops, w[1].1.peak_gops);
            assert!(w[0].1.bram_total > w[1].1.bram_total);
            assert!(w[0].1.luts_per_op() < w[1].1.luts_per_op());
        }
        assert_eq!(sweep_csv(&rows).lines().count(), 4);
    }
}
