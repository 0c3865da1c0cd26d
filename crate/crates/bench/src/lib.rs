//! Criterion benchmarks for the hot kernels: the gate-level periphery, the
//! three matrix products, the FP8 quantizer and one engine run.

use std::hint::black_box;

use criterion::{BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oisma_core::accum::{accumulate_row, netlist_for, Structure};
use oisma_core::array::RowBits;
use oisma_core::bench::trial_operands;
use oisma_core::{
    default_dataset, matmul_bp, matmul_fp64, matmul_fp8, plan_placement, quantize, Engine,
    Inventory, MatrixReal,
};

pub fn benchmarks(c: &mut Criterion) {
    periphery(c);
    products(c);
    quantizer(c);
    engine(c);
}

fn periphery(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = c.benchmark_group("periphery");

    let lanes: Vec<u64> = (0..16).map(|_| rng.gen()).collect();
    g.throughput(Throughput::Elements(64));
    g.bench_function("counter16_x64_lanes", |b| {
        b.iter(|| {
            netlist_for(Structure::Counter16)
                .eval_lanes(black_box(&lanes))
                .unwrap()
        })
    });

    let row = RowBits::from_limbs(rng.gen());
    g.throughput(Throughput::Elements(1));
    g.bench_function("accumulate_row", |b| {
        b.iter(|| accumulate_row(black_box(&row)))
    });
    g.finish();
}

fn products(c: &mut Criterion) {
    let d = default_dataset();
    let mut g = c.benchmark_group("matmul");
    g.sample_size(10);
    for n in [16, 64, 256] {
        let (x, w) = trial_operands(7, n, 0);
        g.throughput(Throughput::Elements((n * n * n) as u64));
        g.bench_with_input(BenchmarkId::new("bp", n), &n, |b, _| {
            b.iter(|| matmul_bp(&x, &w, &d).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("fp8", n), &n, |b, _| {
            b.iter(|| matmul_fp8(&x, &w).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("fp64", n), &n, |b, _| {
            b.iter(|| matmul_fp64(&x, &w).unwrap())
        });
    }
    g.finish();
}

fn quantizer(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xs: Vec<f64> = (0..1024).map(|_| rng.gen::<f64>() * 240.0).collect();
    let mut g = c.benchmark_group("fp8");
    g.throughput(Throughput::Elements(xs.len() as u64));
    g.bench_function("quantize_1024", |b| {
        b.iter(|| {
            xs.iter()
                .map(|&x| quantize(black_box(x)).unwrap())
                .sum::<f64>()
        })
    });
    g.finish();
}

fn engine(c: &mut Criterion) {
    let d = default_dataset();
    let (x, w) = trial_operands(3, 128, 0);
    let x = MatrixReal::from_fn(4, 128, |i, j| x.get(i, j));
    let w = MatrixReal::from_fn(128, 32, |i, j| w.get(i, j));
    let plan = plan_placement(std::slice::from_ref(&w), Inventory::default()).unwrap();
    let mut e = Engine::new(plan, std::slice::from_ref(&w), d).unwrap();
    let mut g = c.benchmark_group("engine");
    g.sample_size(10);
    g.throughput(Throughput::Elements(4 * 128 * 32));
    g.bench_function("execute_4x128x32", |b| {
        b.iter(|| e.execute(black_box(&x)).unwrap())
    });
    g.finish();
}
