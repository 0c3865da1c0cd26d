//! Bit-accurate model of an in-memory stochastic multiplication engine.
//!
//! * [`bp`]: Bent-Pyramid bitstreams, AND multiplication, BP8 compression
//! * [`minifloat`]: FP8 E4M3 reference quantizer
//! * [`array`]: 256x128 1T1R array with control-signal traces
//! * [`accum`]: gate-level parallel counters and adder trees
//! * [`dataflow`]: matrix encoding, placement and stationary execution
//! * [`perf`]: energy, throughput and area metrics
//! * [`bench`]: accuracy and workload benchmark routines

pub mod accum;
pub mod array;
pub mod bench;
pub mod bp;
pub mod dataflow;
pub mod minifloat;
pub mod perf;

pub use bp::{
    compress, decode, default_dataset, encode, load_dataset, multiply, multiply8, validate_dataset,
    Bias, Bp8Bitstream, BpBitstream, BpDataset, BpError, BpProduct, Decode,
};
pub use dataflow::{
    encode_matrix, frobenius_rel_error, matmul_bp, matmul_fp64, matmul_fp8, plan_placement,
    BpMatrix, DataflowError, Engine, Inventory, MatrixReal, PlacementPlan, ScheduleStats,
};
pub use minifloat::{enumerate_positive, fp8_multiply, quantize};
pub use perf::{EnergyParams, GeometryParams, MetricsReport, Mode, PerfConfig, ScalingFactors};
