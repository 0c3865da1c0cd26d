//! Energy, power, throughput and area accounting.
//!
//! Conventions: one MAC is two ops; a MAC on `word_bits`-bit operands costs
//! `(mult + accum) * word_bits` femtojoules; one array completes
//! `cols / word_bits` MACs per cycle.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Mul;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataflow::ScheduleStats;

const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerfError {
    #[error("{0} must be positive, got {1}")]
    NonPositive(&'static str, f64),
    #[error("energy ordering violated: expected vmm <= single <= read")]
    Ordering,
    #[error("word_bits must be at least 1")]
    WordBits,
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("config: {0}")]
    Config(String),
}

fn positive(name: &'static str, v: f64) -> Result<(), PerfError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(PerfError::NonPositive(name, v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub read_fj_per_bit: f64,
    pub mult_single_fj_per_bit: f64,
    pub mult_vmm_fj_per_bit: f64,
    pub accum_fj_per_bit: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        PerfConfig::default().energy
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), PerfError> {
        positive("read_fj_per_bit", self.read_fj_per_bit)?;
        positive("mult_single_fj_per_bit", self.mult_single_fj_per_bit)?;
        positive("mult_vmm_fj_per_bit", self.mult_vmm_fj_per_bit)?;
        positive("accum_fj_per_bit", self.accum_fj_per_bit)?;
        if self.mult_vmm_fj_per_bit > self.mult_single_fj_per_bit
            || self.mult_single_fj_per_bit > self.read_fj_per_bit
        {
            return Err(PerfError::Ordering);
        }
        Ok(())
    }

    pub fn mult(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Single => self.mult_single_fj_per_bit,
            Mode::Vmm => self.mult_vmm_fj_per_bit,
        }
    }
}

/// Isolated multiplications or back-to-back vector-matrix streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Single,
    Vmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    pub rows: usize,
    pub cols: usize,
    pub banks: usize,
    pub arrays_per_bank: usize,
    pub frequency_hz: f64,
    pub word_bits: u32,
    /// Effective computing area of one array.
    pub array_area_mm2: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        Self::single_array()
    }
}

impl GeometryParams {
    /// One 4 KB array at 50 MHz.
    pub fn single_array() -> Self {
        PerfConfig::default().geometry
    }

    /// `banks` banks of four arrays each.
    pub fn engine(banks: usize) -> Self {
        Self {
            banks,
            arrays_per_bank: 4,
            ..Self::single_array()
        }
    }

    pub fn arrays(&self) -> usize {
        self.banks * self.arrays_per_bank
    }

    pub fn area_mm2(&self) -> f64 {
        self.arrays() as f64 * self.array_area_mm2
    }

    pub fn macs_per_cycle(&self) -> f64 {
        (self.arrays() * self.cols) as f64 / f64::from(self.word_bits)
    }
}

/// Multipliers taking 180nm metrics to another node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactors {
    pub energy_ratio: f64,
    pub delay_ratio: f64,
    pub area_ratio: f64,
}

impl ScalingFactors {
    pub const IDENTITY: ScalingFactors = ScalingFactors {
        energy_ratio: 1.0,
        delay_ratio: 1.0,
        area_ratio: 1.0,
    };

    pub fn validate(&self) -> Result<(), PerfError> {
        positive("energy_ratio", self.energy_ratio)?;
        positive("delay_ratio", self.delay_ratio)?;
        positive("area_ratio", self.area_ratio)
    }
}

impl Mul for ScalingFactors {
    type Output = ScalingFactors;

    fn mul(self, o: ScalingFactors) -> ScalingFactors {
        ScalingFactors {
            energy_ratio: self.energy_ratio * o.energy_ratio,
            delay_ratio: self.delay_ratio * o.delay_ratio,
            area_ratio: self.area_ratio * o.area_ratio,
        }
    }
}

/// Energy and geometry parameters plus named scaling-factor sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfConfig {
    pub energy: EnergyParams,
    pub geometry: GeometryParams,
    #[serde(default)]
    pub nodes: BTreeMap<String, ScalingFactors>,
}

impl Default for PerfConfig {
    fn default() -> Self {
        Self::from_toml(DEFAULT_CONFIG).expect("shipped config is valid")
    }
}

impl PerfConfig {
    pub fn from_toml(text: &str) -> Result<Self, PerfError> {
        let cfg: PerfConfig = toml::from_str(text).map_err(|e| PerfError::Config(e.to_string()))?;
        cfg.energy.validate()?;
        positive("frequency_hz", cfg.geometry.frequency_hz)?;
        positive("array_area_mm2", cfg.geometry.array_area_mm2)?;
        if cfg.geometry.word_bits == 0 {
            return Err(PerfError::WordBits);
        }
        for f in cfg.nodes.values() {
            f.validate()?;
        }
        Ok(cfg)
    }

    pub fn node(&self, name: &str) -> Result<ScalingFactors, PerfError> {
        self.nodes
            .get(name)
            .copied()
            .ok_or_else(|| PerfError::UnknownNode(name.to_string()))
    }

    /// The shipped configuration text.
    pub fn default_text() -> &'static str {
        DEFAULT_CONFIG
    }
}

/// Energy of one MAC in picojoules.
pub fn mac_energy(p: &EnergyParams, mode: Mode, word_bits: u32) -> Result<f64, PerfError> {
    if word_bits == 0 {
        return Err(PerfError::WordBits);
    }
    Ok((p.mult(mode) + p.accum_fj_per_bit) * f64::from(word_bits) / 1000.0)
}

/// Peak throughput in GOPS.
pub fn throughput(g: &GeometryParams) -> f64 {
    g.macs_per_cycle() * 2.0 * g.frequency_hz / 1e9
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub node: String,
    pub energy_per_mac_pj: f64,
    pub frequency_mhz: f64,
    pub power_mw: f64,
    pub throughput_gops: f64,
    pub tops_per_w: f64,
    pub gops_per_mm2: f64,
    pub area_mm2: f64,
}

impl MetricsReport {
    /// Fills in power and the two efficiencies from the primary quantities.
    fn derive(
        node: String,
        energy_per_mac_pj: f64,
        frequency_mhz: f64,
        throughput_gops: f64,
        area_mm2: f64,
    ) -> Self {
        let macs_per_s = throughput_gops * 1e9 / 2.0;
        Self {
            node,
            energy_per_mac_pj,
            frequency_mhz,
            power_mw: macs_per_s * energy_per_mac_pj * 1e-12 * 1e3,
            throughput_gops,
            tops_per_w: 2.0 / energy_per_mac_pj,
            gops_per_mm2: throughput_gops / area_mm2,
            area_mm2,
        }
    }
}

/// Headline metrics at the native node.
pub fn efficiency(
    p: &EnergyParams,
    g: &GeometryParams,
    mode: Mode,
) -> Result<MetricsReport, PerfError> {
    positive("area", g.area_mm2())?;
    let e = mac_energy(p, mode, g.word_bits)?;
    positive("mac energy", e)?;
    Ok(MetricsReport::derive(
        "180nm".into(),
        e,
        g.frequency_hz / 1e6,
        throughput(g),
        g.area_mm2(),
    ))
}

/// Applies node factors: energy times `energy_ratio`, clock divided by
/// `delay_ratio`, area times `area_ratio`.
pub fn scale_to_node(
    r: &MetricsReport,
    f: &ScalingFactors,
    node: &str,
) -> Result<MetricsReport, PerfError> {
    f.validate()?;
    Ok(MetricsReport::derive(
        node.to_string(),
        r.energy_per_mac_pj * f.energy_ratio,
        r.frequency_mhz / f.delay_ratio,
        r.throughput_gops / f.delay_ratio,
        r.area_mm2 * f.area_ratio,
    ))
}

const TABLE_ROWS: [&str; 8] = [
    "Technology",
    "Data Format",
    "Frequency (MHz)",
    "Power (mW)",
    "Throughput (GOPS)",
    "Energy Efficiency (TOPS/W)",
    "Area Efficiency (GOPS/mm2)",
    "Energy per MAC (pJ)",
];

fn table_cells(r: &MetricsReport) -> [String; 8] {
    [
        r.node.clone(),
        "BP8".into(),
        format!("{:.1}", r.frequency_mhz),
        format!("{:.3}", r.power_mw),
        format!("{:.3}", r.throughput_gops),
        format!("{:.3}", r.tops_per_w),
        format!("{:.2}", r.gops_per_mm2),
        format!("{:.4}", r.energy_per_mac_pj),
    ]
}

/// Human-readable table, one column per report.
pub fn metrics_table(reports: &[MetricsReport]) -> String {
    let cells: Vec<[String; 8]> = reports.iter().map(table_cells).collect();
    let label_w = TABLE_ROWS.iter().map(|l| l.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (row, label) in TABLE_ROWS.iter().enumerate() {
        let _ = write!(out, "{label:<label_w$}");
        for c in &cells {
            let _ = write!(out, "  {:>12}", c[row]);
        }
        out.push('\n');
    }
    out
}

pub fn metrics_csv(reports: &[MetricsReport]) -> String {
    let mut out =
        String::from("node,energy_per_mac_pj,frequency_mhz,power_mw,throughput_gops,tops_per_w,gops_per_mm2,area_mm2\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.node,
            r.energy_per_mac_pj,
            r.frequency_mhz,
            r.power_mw,
            r.throughput_gops,
            r.tops_per_w,
            r.gops_per_mm2,
            r.area_mm2
        );
    }
    out
}

/// Estimated energy of one engine run, by component, in femtojoules.
///
/// Per-bit figures are array averages, so this is an estimate rather than a
/// measurement of the particular data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadEnergy {
    pub mode: Mode,
    pub mult_fj: f64,
    pub accum_fj: f64,
    pub read_fj: f64,
}

impl WorkloadEnergy {
    pub fn total_fj(&self) -> f64 {
        self.mult_fj + self.accum_fj + self.read_fj
    }

    pub fn to_text(&self) -> String {
        let mode = match self.mode {
            Mode::Single => "single",
            Mode::Vmm => "vmm",
        };
        format!(
            "energy estimate ({mode}): mult={:.1} fJ accum={:.1} fJ input_read={:.1} fJ total={:.1} fJ",
            self.mult_fj,
            self.accum_fj,
            self.read_fj,
            self.total_fj()
        )
    }
}

pub fn workload_energy(
    stats: &ScheduleStats,
    p: &EnergyParams,
    g: &GeometryParams,
    mode: Mode,
) -> WorkloadEnergy {
    let bits = g.cols as f64;
    WorkloadEnergy {
        mode,
        mult_fj: stats.and_ops as f64 * p.mult(mode) * bits,
        accum_fj: stats.accumulator_invocations as f64 * p.accum_fj_per_bit * bits,
        read_fj: stats.input_reads as f64 * p.read_fj_per_bit * bits,
    }
}
