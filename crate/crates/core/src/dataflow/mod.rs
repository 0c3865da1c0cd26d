//! Matrix multiplication on top of the bitstream format and the array model.
//!
//! [`matmul_bp`], [`matmul_fp8`] and [`matmul_fp64`] are pure reference
//! kernels. [`Engine`] runs the same BP product through simulated arrays,
//! following a [`PlacementPlan`].

mod engine;
mod placement;

use std::fmt;
use std::ops::{Add, AddAssign};

use thiserror::Error;

use crate::array::ArrayError;
use crate::bp::{compress, encode, Bias, Bp8Bitstream, BpDataset, BpError};
use crate::minifloat::{self, Fp8Error, CODES};

pub use engine::{Engine, Execution, TRACE_SAMPLE};
pub use placement::{
    plan_placement, ArrayAssignment, Inventory, PlacementPlan, Tile, WORDS_PER_ROW,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataflowError {
    #[error("matrix has {got} elements, expected {rows}x{cols}")]
    Size {
        rows: usize,
        cols: usize,
        got: usize,
    },
    #[error("element ({0}, {1}) is not finite")]
    NonFinite(usize, usize),
    #[error("element ({i}, {j}): {source}")]
    Encode { i: usize, j: usize, source: BpError },
    #[error("element ({i}, {j}): {source}")]
    Quantize {
        i: usize,
        j: usize,
        source: Fp8Error,
    },
    #[error("cannot multiply {0}x{1} by {2}x{3}")]
    InnerMismatch(usize, usize, usize, usize),
    #[error("shapes differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("baseline matrix has zero Frobenius norm")]
    ZeroNorm,
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("placement needs {needed} weight arrays, inventory has {available}")]
    Capacity { needed: usize, available: usize },
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Bp(#[from] BpError),
    #[error(transparent)]
    Array(#[from] ArrayError),
}

/// Dense row-major matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixReal {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixReal {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, DataflowError> {
        if data.len() != rows * cols {
            return Err(DataflowError::Size {
                rows,
                cols,
                got: data.len(),
            });
        }
        if let Some(p) = data.iter().position(|v| !v.is_finite()) {
            return Err(DataflowError::NonFinite(p / cols, p % cols));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Panics if `f` returns a non-finite value.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let v = f(i, j);
                assert!(v.is_finite(), "element ({i}, {j}) is not finite");
                data.push(v);
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Parses `<rows>,<cols>` followed by one comma-separated line per row.
    /// Blank lines and `#` comments are skipped.
    pub fn from_csv(text: &str) -> Result<Self, DataflowError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let csv_err = |line, message: String| DataflowError::Csv { line, message };
        let fields = |n: usize, l: &str| -> Result<Vec<f64>, DataflowError> {
            l.split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| csv_err(n, format!("{f:?}: {e}")))
                })
                .collect()
        };

        let (n, header) = lines
            .next()
            .ok_or_else(|| csv_err(0, "empty matrix file".into()))?;
        let dims: Vec<usize> = header
            .split(',')
            .map(|f| f.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| csv_err(n, format!("expected `rows,cols` header, found {header:?}")))?;
        let [rows, cols] = dims[..] else {
            return Err(csv_err(
                n,
                format!("expected `rows,cols` header, found {header:?}"),
            ));
        };

        let mut data = Vec::with_capacity(rows * cols);
        let mut seen = 0;
        for (n, l) in lines {
            let row = fields(n, l)?;
            if row.len() != cols {
                return Err(csv_err(n, format!("{} values, expected {cols}", row.len())));
            }
            if seen == rows {
                return Err(csv_err(n, format!("more than {rows} rows")));
            }
            data.extend(row);
            seen += 1;
        }
        if seen != rows {
            return Err(csv_err(0, format!("{seen} rows, expected {rows}")));
        }
        Self::new(rows, cols, data)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{}\n", self.rows, self.cols);
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for MatrixReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{v:.4}")).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Matrix of BP8 words sharing one bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpMatrix {
    rows: usize,
    cols: usize,
    bias: Bias,
    words: Vec<Bp8Bitstream>,
}

impl BpMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bias(&self) -> Bias {
        self.bias
    }

    pub fn get(&self, i: usize, j: usize) -> &Bp8Bitstream {
        &self.words[i * self.cols + j]
    }

    pub fn bits(&self, i: usize, j: usize) -> u8 {
        self.get(i, j).bits()
    }

    /// Element-wise encoded values. A lone BP8 word can miss an edge one, so
    /// this uses the value carried with each word rather than its popcount.
    pub fn decode(&self) -> MatrixReal {
        MatrixReal::from_fn(self.rows, self.cols, |i, j| {
            f64::from(self.get(i, j).value_tenths()) / 10.0
        })
    }
}

pub fn encode_matrix(m: &MatrixReal, bias: Bias, d: &BpDataset) -> Result<BpMatrix, DataflowError> {
    let mut words = Vec::with_capacity(m.data.len());
    for i in 0..m.rows {
        for j in 0..m.cols {
            let b = encode(m.get(i, j), bias, d).map_err(|source| DataflowError::Encode {
                i,
                j,
                source,
            })?;
            words.push(compress(&b));
        }
    }
    Ok(BpMatrix {
        rows: m.rows,
        cols: m.cols,
        bias,
        words,
    })
}

fn check_inner(x: &MatrixReal, w: &MatrixReal) -> Result<(), DataflowError> {
    if x.cols != w.rows {
        return Err(DataflowError::InnerMismatch(x.rows, x.cols, w.rows, w.cols));
    }
    Ok(())
}

/// Packs a sequence of BP8 words eight to a `u64`, zero-padding the tail.
fn pack(words: impl Iterator<Item = u8>, len: usize) -> Vec<u64> {
    let mut out = vec![0u64; len.div_ceil(8)];
    for (k, w) in words.enumerate() {
        out[k / 8] |= u64::from(w) << (8 * (k % 8));
    }
    out
}

/// Integer ones-count of every BP dot product, before the `/10` rescale.
pub fn matmul_bp_ones(x: &BpMatrix, w: &BpMatrix) -> Result<Vec<u32>, DataflowError> {
    if x.cols != w.rows {
        return Err(DataflowError::InnerMismatch(x.rows, x.cols, w.rows, w.cols));
    }
    if x.bias == w.bias {
        return Err(BpError::Correlated(x.bias).into());
    }
    let k = x.cols;
    let xs: Vec<Vec<u64>> = (0..x.rows)
        .map(|i| pack((0..k).map(|c| x.bits(i, c)), k))
        .collect();
    let ws: Vec<Vec<u64>> = (0..w.cols)
        .map(|j| pack((0..k).map(|r| w.bits(r, j)), k))
        .collect();
    let mut out = Vec::with_capacity(x.rows * w.cols);
    for xr in &xs {
        for wc in &ws {
            out.push(xr.iter().zip(wc).map(|(a, b)| (a & b).count_ones()).sum());
        }
    }
    Ok(out)
}

/// BP product: `X` right-biased, `W` left-biased, per-product ones summed
/// as integers and divided by 10 once per output.
pub fn matmul_bp(
    x: &MatrixReal,
    w: &MatrixReal,
    d: &BpDataset,
) -> Result<MatrixReal, DataflowError> {
    check_inner(x, w)?;
    let xe = encode_matrix(x, Bias::Right, d)?;
    let we = encode_matrix(w, Bias::Left, d)?;
    let ones = matmul_bp_ones(&xe, &we)?;
    Ok(MatrixReal {
        rows: x.rows,
        cols: w.cols,
        data: ones.into_iter().map(|n| f64::from(n) / 10.0).collect(),
    })
}

fn fp8_codes(m: &MatrixReal) -> Result<Vec<u8>, DataflowError> {
    let mut out = Vec::with_capacity(m.data.len());
    for (p, &v) in m.data.iter().enumerate() {
        let c = minifloat::code(v).map_err(|source| DataflowError::Quantize {
            i: p / m.cols,
            j: p % m.cols,
            source,
        })?;
        out.push(c);
    }
    Ok(out)
}

fn fp8_product_table() -> &'static [f64] {
    static TABLE: std::sync::OnceLock<Vec<f64>> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(CODES * CODES);
        for a in 0..CODES as u8 {
            for b in 0..CODES as u8 {
                let p = minifloat::fp8_multiply(
                    minifloat::value_of_code(a),
                    minifloat::value_of_code(b),
                );
                t.push(p.expect("grid values are in range"));
            }
        }
        t
    })
}

/// Operands quantized to E4M3, each product re-quantized, sums kept in f64.
pub fn matmul_fp8(x: &MatrixReal, w: &MatrixReal) -> Result<MatrixReal, DataflowError> {
    check_inner(x, w)?;
    let xc = fp8_codes(x)?;
    let wt = fp8_codes(&w.transpose())?;
    let table = fp8_product_table();
    let k = x.cols;
    let mut data = Vec::with_capacity(x.rows * w.cols);
    for i in 0..x.rows {
        let xr = &xc[i * k..(i + 1) * k];
        for j in 0..w.cols {
            let wc = &wt[j * k..(j + 1) * k];
            let s: f64 = xr
                .iter()
                .zip(wc)
                .map(|(&a, &b)| table[usize::from(a) * CODES + usize::from(b)])
                .sum();
            data.push(s);
        }
    }
    Ok(MatrixReal {
        rows: x.rows,
        cols: w.cols,
        data,
    })
}

pub fn matmul_fp64(x: &MatrixReal, w: &MatrixReal) -> Result<MatrixReal, DataflowError> {
    check_inner(x, w)?;
    let wt = w.transpose();
    let mut data = Vec::with_capacity(x.rows * w.cols);
    for i in 0..x.rows {
        let xr = x.row(i);
        for j in 0..w.cols {
            data.push(xr.iter().zip(wt.row(j)).map(|(a, b)| a * b).sum());
        }
    }
    Ok(MatrixReal {
        rows: x.rows,
        cols: w.cols,
        data,
    })
}

/// `||A - Ahat||_F / ||A||_F`.
pub fn frobenius_rel_error(a: &MatrixReal, ahat: &MatrixReal) -> Result<f64, DataflowError> {
    if a.shape() != ahat.shape() {
        return Err(DataflowError::ShapeMismatch(
            a.rows, a.cols, ahat.rows, ahat.cols,
        ));
    }
    let norm = a.frobenius_norm();
    if norm == 0.0 {
        return Err(DataflowError::ZeroNorm);
    }
    let diff: f64 = a
        .data
        .iter()
        .zip(&ahat.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(diff.sqrt() / norm)
}

/// Operation counts from one engine run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScheduleStats {
    /// One array AND per cycle, summed over all arrays.
    pub cycles: u64,
    /// Cycles when arrays holding the same input chunk work in parallel.
    pub wall_cycles: u64,
    pub and_ops: u64,
    pub input_reads: u64,
    pub input_vector_loads: u64,
    pub accumulator_invocations: u64,
    pub macs: u64,
    pub ops: u64,
}

impl ScheduleStats {
    pub fn merge(&self, other: &ScheduleStats) -> ScheduleStats {
        *self + *other
    }

    pub fn to_text(&self) -> String {
        format!(
            "cycles={} wall_cycles={} and_ops={} input_reads={} input_vector_loads={} \
             accumulator_invocations={} macs={} ops={}",
            self.cycles,
            self.wall_cycles,
            self.and_ops,
            self.input_reads,
            self.input_vector_loads,
            self.accumulator_invocations,
            self.macs,
            self.ops
        )
    }
}

impl Add for ScheduleStats {
    type Output = ScheduleStats;

    fn add(self, o: ScheduleStats) -> ScheduleStats {
        ScheduleStats {
            cycles: self.cycles + o.cycles,
            wall_cycles: self.wall_cycles + o.wall_cycles,
            and_ops: self.and_ops + o.and_ops,
            input_reads: self.input_reads + o.input_reads,
            input_vector_loads: self.input_vector_loads + o.input_vector_loads,
            accumulator_invocations: self.accumulator_invocations + o.accumulator_invocations,
            macs: self.macs + o.macs,
            ops: self.ops + o.ops,
        }
    }
}

impl AddAssign for ScheduleStats {
    fn add_assign(&mut self, o: ScheduleStats) {
        *self = *self + o;
    }
}
