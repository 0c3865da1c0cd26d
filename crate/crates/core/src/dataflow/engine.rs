use super::placement::{PlacementPlan, WORDS_PER_ROW};
use super::{encode_matrix, DataflowError, MatrixReal, ScheduleStats};
use crate::accum::accumulate_row;
use crate::array::{OismaArray, OpTrace, RowBits, ROWS};
use crate::bp::{Bias, BpDataset};

/// Number of control traces kept from the start of a run.
pub const TRACE_SAMPLE: usize = 4;

/// One wordline's role: which output column it feeds.
#[derive(Debug, Clone, Copy)]
struct Consumer {
    array: usize,
    wordline: usize,
    matrix: usize,
    col: usize,
}

/// Simulated arrays programmed with a plan's weights.
#[derive(Debug, Clone)]
pub struct Engine {
    plan: PlacementPlan,
    dataset: BpDataset,
    /// Indexed by array id; entry 0 is the input array.
    arrays: Vec<OismaArray>,
    /// Consumers of each input chunk, in broadcast order.
    consumers: Vec<Vec<Consumer>>,
}

/// Outputs of one engine run, one matrix per planned weight matrix.
#[derive(Debug, Clone)]
pub struct Execution {
    pub outputs: Vec<MatrixReal>,
    pub stats: ScheduleStats,
    /// The first few array operations in issue order.
    pub trace: Vec<OpTrace>,
}

/// Words `chunk*32 .. chunk*32+32` of a length-`depth` operand vector,
/// zero-padded past the end.
fn segment_row(depth: usize, chunk: usize, word: impl Fn(usize) -> u8) -> RowBits {
    let mut words = [0u8; WORDS_PER_ROW];
    let start = chunk * WORDS_PER_ROW;
    for (t, w) in words
        .iter_mut()
        .enumerate()
        .take(depth.saturating_sub(start))
    {
        *w = word(start + t);
    }
    RowBits::from_words(&words)
}

impl Engine {
    /// Writes every weight word into its planned wordline.
    pub fn new(
        plan: PlacementPlan,
        weights: &[MatrixReal],
        dataset: BpDataset,
    ) -> Result<Self, DataflowError> {
        let shapes: Vec<(usize, usize)> = weights.iter().map(|w| w.shape()).collect();
        let expected: Vec<(usize, usize)> = plan
            .matrix_cols()
            .iter()
            .map(|&c| (plan.inner(), c))
            .collect();
        if shapes != expected {
            return Err(DataflowError::Plan(format!(
                "weights {shapes:?} do not match plan {expected:?}"
            )));
        }
        let encoded = weights
            .iter()
            .map(|w| encode_matrix(w, Bias::Left, &dataset))
            .collect::<Result<Vec<_>, _>>()?;

        let mut arrays = vec![OismaArray::new(); plan.weight_arrays() + 1];
        let mut consumers = vec![Vec::new(); plan.chunks()];
        for a in plan.assignments() {
            for t in &a.tiles {
                let w = &encoded[t.matrix];
                for (col, wordline) in t.cols.clone().zip(t.wordlines.clone()) {
                    let row = segment_row(w.rows(), t.chunk, |k| w.bits(k, col));
                    arrays[a.array].write_row(wordline, &row)?;
                    consumers[t.chunk].push(Consumer {
                        array: a.array,
                        wordline,
                        matrix: t.matrix,
                        col,
                    });
                }
            }
        }
        Ok(Self {
            plan,
            dataset,
            arrays,
            consumers,
        })
    }

    pub fn plan(&self) -> &PlacementPlan {
        &self.plan
    }

    pub fn array(&self, id: usize) -> &OismaArray {
        &self.arrays[id]
    }

    /// Input-stationary run: each row of `x` is loaded once and every chunk
    /// of it is ANDed against all consuming wordlines before the next row.
    pub fn execute(&mut self, x: &MatrixReal) -> Result<Execution, DataflowError> {
        if x.cols() != self.plan.inner() {
            return Err(DataflowError::InnerMismatch(
                x.rows(),
                x.cols(),
                self.plan.inner(),
                0,
            ));
        }
        let xe = encode_matrix(x, Bias::Right, &self.dataset)?;
        let n = x.rows();
        let cols = self.plan.matrix_cols().to_vec();
        let mut ones: Vec<Vec<u32>> = cols.iter().map(|&m| vec![0; n * m]).collect();
        let mut stats = ScheduleStats::default();
        let mut trace = Vec::new();
        let keep = |t: OpTrace, trace: &mut Vec<OpTrace>| {
            if trace.len() < TRACE_SAMPLE {
                trace.push(t);
            }
        };
        let mut per_array = vec![0u64; self.arrays.len()];

        for i in 0..n {
            stats.input_vector_loads += 1;
            for chunk in 0..self.plan.chunks() {
                let slot = (i * self.plan.chunks() + chunk) % ROWS;
                let input = segment_row(xe.cols(), chunk, |k| xe.bits(i, k));
                keep(self.arrays[0].write_row(slot, &input)?, &mut trace);
                let (input, t) = self.arrays[0].read_row(slot)?;
                keep(t, &mut trace);
                stats.input_reads += 1;

                per_array.fill(0);
                for c in &self.consumers[chunk] {
                    let (sensed, t) = self.arrays[c.array].and_row(c.wordline, &input)?;
                    keep(t, &mut trace);
                    ones[c.matrix][i * cols[c.matrix] + c.col] +=
                        u32::from(accumulate_row(&sensed));
                    stats.and_ops += 1;
                    stats.accumulator_invocations += 1;
                    per_array[c.array] += 1;
                }
                stats.wall_cycles += per_array.iter().max().copied().unwrap_or(0);
            }
        }
        stats.cycles = stats.and_ops;
        stats.macs = (n * self.plan.inner() * cols.iter().sum::<usize>()) as u64;
        stats.ops = 2 * stats.macs;

        let outputs = ones
            .into_iter()
            .zip(&cols)
            .map(|(o, &m)| {
                MatrixReal::new(n, m, o.into_iter().map(|v| f64::from(v) / 10.0).collect())
                    .expect("shape matches")
            })
            .collect();
        Ok(Execution {
            outputs,
            stats,
            trace,
        })
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::array::OpKind;
    use crate::bp::default_dataset;
    use crate::dataflow::{matmul_bp, plan_placement, Inventory};

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> MatrixReal {
        MatrixReal::from_fn(rows, cols, |_, _| rng.gen::<f64>())
    }

    fn run(x: &MatrixReal, ws: &[MatrixReal]) -> Execution {
        let plan = plan_placement(ws, Inventory::default()).unwrap();
        Engine::new(plan, ws, default_dataset())
            .unwrap()
            .execute(x)
            .unwrap()
    }

    #[test]
    fn single_row_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(1, 128, &mut rng);
        let w = random(128, 32, &mut rng);
        let e = run(&x, std::slice::from_ref(&w));
        assert_eq!(e.outputs[0], matmul_bp(&x, &w, &default_dataset()).unwrap());
        assert_eq!(e.stats.and_ops, 128);
        assert_eq!(e.stats.macs, 128 * 32);
        // one full wordline AND is 32 MACs, 64 ops
        assert_eq!(e.stats.macs / e.stats.cycles, 32);
        assert_eq!(e.stats.ops / e.stats.cycles, 64);
    }

    #[test]
    fn qkv_reads_input_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random(3, 128, &mut rng);
        let ws: Vec<MatrixReal> = (0..3).map(|_| random(128, 32, &mut rng)).collect();
        let shared = run(&x, &ws);
        let alone = run(&x, &ws[..1]);
        assert_eq!(shared.stats.input_reads, alone.stats.input_reads);
        assert_eq!(shared.stats.input_vector_loads, 3);
        assert_eq!(shared.stats.and_ops, 3 * alone.stats.and_ops);
        // the three arrays work in parallel on each chunk
        assert_eq!(shared.stats.wall_cycles, alone.stats.wall_cycles);
        for (out, w) in shared.outputs.iter().zip(&ws) {
            assert_eq!(out, &matmul_bp(&x, w, &default_dataset()).unwrap());
        }
    }

    #[test]
    fn trace_sample_starts_with_input_load() {
        let x = MatrixReal::from_fn(1, 4, |_, j| j as f64 / 4.0);
        let w = MatrixReal::from_fn(4, 3, |i, j| ((i + j) % 3) as f64 / 3.0);
        let e = run(&x, &[w]);
        let kinds: Vec<OpKind> = e.trace.iter().map(|t| t.kind).collect();
        assert_eq!(
            kinds,
            [OpKind::Write, OpKind::Read, OpKind::And, OpKind::And]
        );
    }

    #[test]
    fn mismatched_input_rejected() {
        let w = MatrixReal::zeros(8, 2);
        let plan = plan_placement(std::slice::from_ref(&w), Inventory::default()).unwrap();
        let mut e = Engine::new(plan, &[w], default_dataset()).unwrap();
        assert!(matches!(
            e.execute(&MatrixReal::zeros(1, 9)),
            Err(DataflowError::InnerMismatch(..))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn engine_matches_reference(
            seed in any::<u64>(),
            n in 1usize..4,
            k in 1usize..100,
            ms in proptest::collection::vec(1usize..48, 1..4),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(n, k, &mut rng);
            let ws: Vec<MatrixReal> = ms.iter().map(|&m| random(k, m, &mut rng)).collect();
            let e = run(&x, &ws);
            for (out, w) in e.outputs.iter().zip(&ws) {
                prop_assert_eq!(out, &matmul_bp(&x, w, &default_dataset()).unwrap());
            }
            prop_assert_eq!(e.stats.macs, (n * k * ms.iter().sum::<usize>()) as u64);
            prop_assert_eq!(e.stats.input_vector_loads, n as u64);
        }
    }
}
