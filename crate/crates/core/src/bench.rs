//! Accuracy and workload benchmarks with seeded, schedule-independent output.

use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bp::{encode, multiply, quantize_tenths, Bias, BpDataset, Decode};
use crate::dataflow::{
    frobenius_rel_error, matmul_bp, matmul_fp64, matmul_fp8, plan_placement, DataflowError, Engine,
    Execution, Inventory, MatrixReal, PlacementPlan,
};
use crate::minifloat::{fp8_multiply, quantize, NormalizedGrid};
use crate::perf::{
    efficiency, scale_to_node, workload_energy, GeometryParams, MetricsReport, Mode, PerfConfig,
    PerfError, WorkloadEnergy,
};

/// Default dims of the matrix sweep.
pub const DEFAULT_DIMS: [usize; 8] = [4, 8, 16, 32, 64, 128, 256, 512];

/// Default work cap: 100 trials of 512x512, counted as `N^3 * trials`.
pub const DEFAULT_WORK_CAP: u128 = 512 * 512 * 512 * 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("invalid benchmark config: {0}")]
    Config(String),
    #[error("requested work {requested} exceeds the cap of {cap} (N^3 x trials); pass --allow-large to run anyway")]
    WorkCap { requested: u128, cap: u128 },
    #[error("engine output for weight matrix {0} differs from the reference product")]
    Mismatch(usize),
    #[error(transparent)]
    Dataflow(#[from] DataflowError),
    #[error(transparent)]
    Perf(#[from] PerfError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchConfig {
    pub seed: u64,
    pub dims: Vec<usize>,
    pub trials: usize,
    pub work_cap: u128,
    pub allow_large: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            dims: DEFAULT_DIMS.to_vec(),
            trials: 100,
            work_cap: DEFAULT_WORK_CAP,
            allow_large: false,
        }
    }
}

impl BenchConfig {
    pub fn work(&self) -> u128 {
        self.dims
            .iter()
            .map(|&n| (n as u128).pow(3) * self.trials as u128)
            .sum()
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(BenchError::Config(
                "dims must be non-empty and at least 1".into(),
            ));
        }
        if self.trials == 0 {
            return Err(BenchError::Config("trials must be at least 1".into()));
        }
        if !self.allow_large && self.work() > self.work_cap {
            return Err(BenchError::WorkCap {
                requested: self.work(),
                cap: self.work_cap,
            });
        }
        Ok(())
    }
}

/// Run metadata emitted as `#` comment lines ahead of CSV bodies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metadata {
    pub seed: u64,
    pub dataset_sha256: String,
    pub timestamp: u64,
}

impl Metadata {
    pub fn new(seed: u64, d: &BpDataset) -> Self {
        Self {
            seed,
            dataset_sha256: dataset_hash(d),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|t| t.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn to_comments(&self) -> String {
        format!(
            "# seed={}\n# dataset_sha256={}\n# timestamp={}\n",
            self.seed, self.dataset_sha256, self.timestamp
        )
    }
}

/// SHA-256 of the dataset's text serialization.
pub fn dataset_hash(d: &BpDataset) -> String {
    hex::encode(Sha256::digest(d.to_text().as_bytes()))
}

fn mean(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len();
    v.sum::<f64>() / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingRow {
    pub index: usize,
    pub raw: f64,
    pub value: f64,
    pub fp8: f64,
    pub bp10: f64,
}

impl MappingRow {
    pub fn fp8_err(&self) -> f64 {
        self.fp8 - self.value
    }

    pub fn bp10_err(&self) -> f64 {
        self.bp10 - self.value
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingReport {
    pub rows: Vec<MappingRow>,
    pub fp8_abs_avg: f64,
    pub bp10_abs_avg: f64,
    /// Same as `bp10_abs_avg` but with values above 0.95 held at 0.9, as the
    /// bitstream encoder does.
    pub bp10_clamped_abs_avg: f64,
}

impl MappingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,raw,normalized,fp8,fp8_err,bp10,bp10_err\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.index,
                r.raw,
                r.value,
                r.fp8,
                r.fp8_err(),
                r.bp10,
                r.bp10_err()
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "mapping: values={} fp8_abs_avg={:.4}% bp10_abs_avg={:.4}% bp10_clamped_abs_avg={:.4}%\n",
            self.rows.len(),
            100.0 * self.fp8_abs_avg,
            100.0 * self.bp10_abs_avg,
            100.0 * self.bp10_clamped_abs_avg
        )
    }
}

/// Maps each normalized FP8 value to its nearest FP8 value and nearest tenth.
///
/// The tenth grid here includes 1.0: the full-scale value maps onto itself.
pub fn bench_mapping() -> MappingReport {
    let grid = NormalizedGrid::new();
    let rows: Vec<MappingRow> = grid
        .raw
        .iter()
        .zip(&grid.values)
        .enumerate()
        .map(|(index, (&raw, &value))| MappingRow {
            index,
            raw,
            value,
            fp8: quantize(value).expect("grid values are in range"),
            bp10: (value * 10.0).round() / 10.0,
        })
        .collect();
    let clamped = mean(grid.values.iter().map(|&v| {
        let k = quantize_tenths(v).expect("grid values are in range");
        (f64::from(k) / 10.0 - v).abs()
    }));
    MappingReport {
        fp8_abs_avg: mean(rows.iter().map(|r| r.fp8_err().abs())),
        bp10_abs_avg: mean(rows.iter().map(|r| r.bp10_err().abs())),
        bp10_clamped_abs_avg: clamped,
        rows,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplyRow {
    pub i: usize,
    pub j: usize,
    /// Max-min normalized exact product.
    pub exact: f64,
    pub fp8: f64,
    pub bp10: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplyReport {
    pub rows: Vec<MultiplyRow>,
    pub fp8_abs_avg: f64,
    pub bp10_abs_avg: f64,
}

impl MultiplyReport {
    pub fn pairs(&self) -> usize {
        self.rows.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,exact,fp8,fp8_err,bp10,bp10_err\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.i,
                r.j,
                r.exact,
                r.fp8,
                r.fp8 - r.exact,
                r.bp10,
                r.bp10 - r.exact
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "multiply: pairs={} fp8_abs_avg={:.4}% bp10_abs_avg={:.4}%\n",
            self.pairs(),
            100.0 * self.fp8_abs_avg,
            100.0 * self.bp10_abs_avg
        )
    }
}

/// Every ordered pair of the normalized FP8 grid. FP8 multiplies quantized
/// operands and re-quantizes; BP10 ANDs a right-biased stream with a
/// left-biased one.
pub fn bench_multiply(d: &BpDataset) -> MultiplyReport {
    let values = NormalizedGrid::new().values;
    let exact: Vec<f64> = values
        .iter()
        .flat_map(|a| values.iter().map(move |b| a * b))
        .collect();
    let (lo, hi) = exact
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let q: Vec<f64> = values
        .iter()
        .map(|&v| quantize(v).expect("in range"))
        .collect();
    let right: Vec<_> = values
        .iter()
        .map(|&v| encode(v, Bias::Right, d).expect("in range"))
        .collect();
    let left: Vec<_> = values
        .iter()
        .map(|&v| encode(v, Bias::Left, d).expect("in range"))
        .collect();

    let n = values.len();
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            rows.push(MultiplyRow {
                i,
                j,
                exact: (exact[i * n + j] - lo) / (hi - lo),
                fp8: fp8_multiply(q[i], q[j]).expect("in range"),
                bp10: multiply(&right[i], &left[j])
                    .expect("opposite bias")
                    .decode(),
            });
        }
    }
    MultiplyReport {
        fp8_abs_avg: mean(rows.iter().map(|r| (r.fp8 - r.exact).abs())),
        bp10_abs_avg: mean(rows.iter().map(|r| (r.bp10 - r.exact).abs())),
        rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatmulRow {
    pub dim: usize,
    pub trial: usize,
    pub fp8_err: f64,
    pub bp_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimMean {
    pub dim: usize,
    pub trials: usize,
    pub fp8_mean: f64,
    pub bp_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatmulReport {
    pub rows: Vec<MatmulRow>,
}

impl MatmulReport {
    /// Per-dim means in first-appearance order.
    pub fn means(&self) -> Vec<DimMean> {
        let mut dims: Vec<usize> = Vec::new();
        for r in &self.rows {
            if !dims.contains(&r.dim) {
                dims.push(r.dim);
            }
        }
        dims.into_iter()
            .map(|dim| {
                let rs: Vec<&MatmulRow> = self.rows.iter().filter(|r| r.dim == dim).collect();
                DimMean {
                    dim,
                    trials: rs.len(),
                    fp8_mean: mean(rs.iter().map(|r| r.fp8_err)),
                    bp_mean: mean(rs.iter().map(|r| r.bp_err)),
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dim,trial,fp8_err,bp_err\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.dim, r.trial, r.fp8_err, r.bp_err);
        }
        out
    }

    pub fn means_csv(&self) -> String {
        let mut out = String::from("dim,trials,fp8_mean,bp_mean\n");
        for m in self.means() {
            let _ = writeln!(out, "{},{},{},{}", m.dim, m.trials, m.fp8_mean, m.bp_mean);
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for m in self.means() {
            let _ = writeln!(
                out,
                "matmul: dim={} trials={} fp8_mean={:.4}% bp_mean={:.4}%",
                m.dim,
                m.trials,
                100.0 * m.fp8_mean,
                100.0 * m.bp_mean
            );
        }
        out
    }
}

/// Random operands for one trial. Each `(dim, trial)` pair has its own
/// ChaCha8 stream, so changing the trial count leaves earlier trials intact.
pub fn trial_operands(seed: u64, dim: usize, trial: usize) -> (MatrixReal, MatrixReal) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((dim as u64) << 32) | trial as u64);
    let x = MatrixReal::from_fn(dim, dim, |_, _| rng.gen::<f64>());
    let w = MatrixReal::from_fn(dim, dim, |_, _| rng.gen::<f64>());
    (x, w)
}

fn matmul_trial(
    seed: u64,
    dim: usize,
    trial: usize,
    d: &BpDataset,
) -> Result<MatmulRow, DataflowError> {
    let (x, w) = trial_operands(seed, dim, trial);
    let exact = matmul_fp64(&x, &w)?;
    Ok(MatmulRow {
        dim,
        trial,
        fp8_err: frobenius_rel_error(&exact, &matmul_fp8(&x, &w)?)?,
        bp_err: frobenius_rel_error(&exact, &matmul_bp(&x, &w, d)?)?,
    })
}

/// Relative Frobenius error of FP8 and BP products against FP64, per trial.
/// Trials run in parallel; rows come back in `(dim, trial)` order.
pub fn bench_matmul(cfg: &BenchConfig, d: &BpDataset) -> Result<MatmulReport, BenchError> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = cfg
        .dims
        .iter()
        .flat_map(|&dim| (0..cfg.trials).map(move |t| (dim, t)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(dim, trial)| matmul_trial(cfg.seed, dim, trial, d))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MatmulReport { rows })
}

/// Result of running weight matrices through the simulated engine.
#[derive(Debug, Clone)]
pub struct WorkloadReport {
    pub plan: PlacementPlan,
    pub execution: Execution,
    pub vmm: WorkloadEnergy,
    pub single: WorkloadEnergy,
}

impl WorkloadReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("# placement\n");
        out.push_str(&self.plan.dump());
        out.push_str("# control trace sample\n");
        for t in &self.execution.trace {
            let _ = writeln!(out, "op {} row {} ({} ns)", t.kind, t.row, t.total_ns());
            out.push_str(&t.to_text());
        }
        out.push_str("# schedule\n");
        out.push_str(&self.execution.stats.to_text());
        out.push('\n');
        out.push_str("# energy (estimate from per-bit averages)\n");
        out.push_str(&self.vmm.to_text());
        out.push('\n');
        out.push_str(&self.single.to_text());
        out.push('\n');
        let _ = writeln!(
            out,
            "single/vmm mult energy ratio = {:.4}",
            self.single.mult_fj / self.vmm.mult_fj
        );
        out.push_str("# verification\nengine output equals reference BP product\n");
        out
    }
}

/// Plans, programs and runs the engine, then checks every output against
/// [`matmul_bp`].
pub fn simulate_workload(
    x: &MatrixReal,
    weights: &[MatrixReal],
    d: &BpDataset,
    inventory: Inventory,
    cfg: &PerfConfig,
) -> Result<WorkloadReport, BenchError> {
    let plan = plan_placement(weights, inventory)?;
    let mut engine = Engine::new(plan.clone(), weights, d.clone())?;
    let execution = engine.execute(x)?;
    for (m, (out, w)) in execution.outputs.iter().zip(weights).enumerate() {
        if *out != matmul_bp(x, w, d)? {
            return Err(BenchError::Mismatch(m));
        }
    }
    let g = GeometryParams {
        banks: inventory.banks,
        arrays_per_bank: inventory.arrays_per_bank,
        ..cfg.geometry
    };
    Ok(WorkloadReport {
        vmm: workload_energy(&execution.stats, &cfg.energy, &g, Mode::Vmm),
        single: workload_energy(&execution.stats, &cfg.energy, &g, Mode::Single),
        plan,
        execution,
    })
}

/// Native-node metrics followed by one report per requested node.
pub fn report_metrics(cfg: &PerfConfig, nodes: &[&str]) -> Result<Vec<MetricsReport>, BenchError> {
    let base = efficiency(&cfg.energy, &cfg.geometry, Mode::Vmm)?;
    let mut out = vec![base.clone()];
    for &n in nodes {
        out.push(scale_to_node(&base, &cfg.node(n)?, n)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bp::default_dataset;

    #[test]
    fn mapping_rows_and_signs() {
        let m = bench_mapping();
        assert_eq!(m.rows.len(), 119);
        assert!(m.rows.iter().any(|r| r.bp10_err() > 0.0));
        assert!(m.rows.iter().any(|r| r.bp10_err() < 0.0));
        let avg = m.rows.iter().map(|r| r.bp10_err().abs()).sum::<f64>() / 119.0;
        assert!((avg - m.bp10_abs_avg).abs() <= 1e-12 * avg);
        assert!(m.bp10_clamped_abs_avg > m.bp10_abs_avg);
    }

    #[test]
    fn exact_tenth_maps_without_error() {
        // 24/240 = 0.1 is on both grids
        let m = bench_mapping();
        let r = m.rows.iter().find(|r| r.raw == 24.0).unwrap();
        assert_eq!(r.bp10_err(), 0.0);
        assert_eq!(r.fp8_err(), quantize(0.1).unwrap() - 0.1);
    }

    #[test]
    fn multiply_pair_count() {
        let m = bench_multiply(&default_dataset());
        assert_eq!(m.pairs(), 14_161);
        assert_eq!(m.to_csv().lines().count(), 14_162);
    }

    #[test]
    fn config_validation() {
        let mut c = BenchConfig {
            dims: vec![4],
            trials: 1,
            ..Default::default()
        };
        assert!(c.validate().is_ok());
        c.trials = 0;
        assert!(matches!(c.validate(), Err(BenchError::Config(_))));
        c.trials = 101;
        c.dims = vec![512];
        assert!(matches!(c.validate(), Err(BenchError::WorkCap { .. })));
        c.allow_large = true;
        assert!(c.validate().is_ok());
        c.dims = vec![0];
        assert!(matches!(c.validate(), Err(BenchError::Config(_))));
    }

    #[test]
    fn matmul_is_deterministic_and_ordered() {
        let d = default_dataset();
        let c = BenchConfig {
            seed: 9,
            dims: vec![8, 4],
            trials: 3,
            ..Default::default()
        };
        let a = bench_matmul(&c, &d).unwrap();
        let b = bench_matmul(&c, &d).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let order: Vec<(usize, usize)> = a.rows.iter().map(|r| (r.dim, r.trial)).collect();
        assert_eq!(order, [(8, 0), (8, 1), (8, 2), (4, 0), (4, 1), (4, 2)]);
        // more trials keep the earlier ones
        let more = bench_matmul(&BenchConfig { trials: 5, ..c }, &d).unwrap();
        assert_eq!(more.rows[..3], a.rows[..3]);
    }

    #[test]
    fn means_recompute_from_rows() {
        let c = BenchConfig {
            seed: 3,
            dims: vec![4, 16],
            trials: 4,
            ..Default::default()
        };
        let r = bench_matmul(&c, &default_dataset()).unwrap();
        for m in r.means() {
            let rows: Vec<_> = r.rows.iter().filter(|x| x.dim == m.dim).collect();
            let bp = rows.iter().map(|x| x.bp_err).sum::<f64>() / rows.len() as f64;
            assert!((bp - m.bp_mean).abs() <= 1e-12 * bp);
        }
    }

    #[test]
    fn one_by_one_is_a_single_product() {
        let d = default_dataset();
        let c = BenchConfig {
            seed: 11,
            dims: vec![1],
            trials: 1,
            ..Default::default()
        };
        let row = bench_matmul(&c, &d).unwrap().rows[0];
        let (x, w) = trial_operands(11, 1, 0);
        let (a, b) = (x.get(0, 0), w.get(0, 0));
        let bp = multiply(
            &encode(a, Bias::Right, &d).unwrap(),
            &encode(b, Bias::Left, &d).unwrap(),
        )
        .unwrap()
        .decode();
        assert!((row.bp_err - (a * b - bp).abs() / (a * b)).abs() < 1e-12);
    }

    #[test]
    fn hash_is_stable_hex() {
        let h = dataset_hash(&default_dataset());
        assert_eq!(h.len(), 64);
        assert_eq!(h, dataset_hash(&default_dataset()));
    }

    #[test]
    fn qkv_workload() {
        let d = default_dataset();
        let (x, _) = trial_operands(2, 128, 0);
        let x = MatrixReal::from_fn(4, 128, |i, j| x.get(i, j));
        let ws: Vec<MatrixReal> = (0..3)
            .map(|t| {
                let (w, _) = trial_operands(3, 128, t);
                MatrixReal::from_fn(128, 32, |i, j| w.get(i, j))
            })
            .collect();
        let r =
            simulate_workload(&x, &ws, &d, Inventory::default(), &PerfConfig::default()).unwrap();
        assert_eq!(r.plan.fan_out(), 3);
        assert_eq!(r.execution.stats.input_reads, 4 * 4);
        assert!((r.single.mult_fj / r.vmm.mult_fj - 216.0 / 178.0).abs() < 1e-12);
        assert!(r.to_text().contains("broadcast chunk 0 -> 1,2,3"));
    }

    #[test]
    fn metrics_rows() {
        let r = report_metrics(&PerfConfig::default(), &["22nm"]).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r[0].throughput_gops - 3.2).abs() < 1e-9);
        assert!(matches!(
            report_metrics(&PerfConfig::default(), &["3nm"]),
            Err(BenchError::Perf(_))
        ));
    }
}
