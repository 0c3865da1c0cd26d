use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use oisma_core::bench::trial_operands;
use oisma_core::{default_dataset, MatrixReal};

fn oisma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oisma"))
        .args(args)
        .output()
        .expect("spawn oisma")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

#[test]
fn metrics_table_and_csv() {
    let o = oisma(&["metrics", "--node", "22nm"]);
    assert!(o.status.success());
    let t = stdout(&o);
    assert!(t.contains("Energy Efficiency (TOPS/W)"));
    assert!(t.contains("0.891") && t.contains("89.500"));

    let o = oisma(&["metrics", "--csv"]);
    let csv = stdout(&o);
    assert!(csv.starts_with("node,energy_per_mac_pj,"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(oisma(&["bench", "nope"]).status.code(), Some(2));
    assert_eq!(
        oisma(&["bench", "matmul", "--trials", "many"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(oisma(&[]).status.code(), Some(2));
}

#[test]
fn dataset_validate() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.bp");
    fs::write(&good, default_dataset().to_text()).unwrap();
    let o = oisma(&["dataset", "validate", good.to_str().unwrap()]);
    assert!(o.status.success());

    let bad = dir.path().join("bad.bp");
    fs::write(
        &bad,
        default_dataset()
            .to_text()
            .replacen("0000111110", "1000111100", 1),
    )
    .unwrap();
    let o = oisma(&["dataset", "validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("right-biased bit0 nonzero at 0.5"));

    // a rejected dataset also stops the benchmarks
    let o = oisma(&["--dataset", bad.to_str().unwrap(), "bench", "multiply"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn dataset_dump_round_trips() {
    let o = oisma(&["dataset", "dump"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(oisma_core::load_dataset(&text).unwrap(), default_dataset());
}

#[test]
fn matmul_csv_is_deterministic() {
    let args = [
        "bench", "matmul", "--dims", "4,16", "--trials", "5", "--seed", "42", "--csv",
    ];
    let a = stdout(&oisma(&args));
    let b = stdout(&oisma(&args));
    assert!(a.contains("# seed=42"));
    assert_eq!(body(&a), body(&b));
    let rows = body(&a);
    assert_eq!(rows.lines().next(), Some("dim,trial,fp8_err,bp_err"));
    assert_eq!(rows.lines().count(), 11);
}

#[test]
fn work_cap_enforced() {
    let o = oisma(&[
        "bench",
        "matmul",
        "--dims",
        "64",
        "--trials",
        "2",
        "--work-cap",
        "1000",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--allow-large"));
    let o = oisma(&[
        "bench",
        "matmul",
        "--dims",
        "8",
        "--trials",
        "2",
        "--work-cap",
        "1000",
        "--allow-large",
    ]);
    assert!(o.status.success());
}

#[test]
fn bench_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let o = oisma(&["bench", "mapping", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("bp10_abs_avg=1.1900%"));
    let csv = fs::read_to_string(out.join("mapping.csv")).unwrap();
    assert!(csv.starts_with("# seed="));
    assert!(csv.contains("# dataset_sha256="));
    assert_eq!(body(&csv).lines().count(), 120);
}

fn write_matrix(dir: &Path, name: &str, m: &MatrixReal) -> String {
    let p = dir.join(name);
    fs::write(&p, m.to_csv()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn simulate_qkv() {
    let dir = tempfile::tempdir().unwrap();
    let (x, _) = trial_operands(1, 64, 0);
    let x = MatrixReal::from_fn(2, 64, |i, j| x.get(i, j));
    let weights: Vec<String> = (0..3)
        .map(|t| {
            let (w, _) = trial_operands(2, 64, t);
            let w = MatrixReal::from_fn(64, 16, |i, j| w.get(i, j));
            write_matrix(dir.path(), &format!("w{t}.csv"), &w)
        })
        .collect();
    let inputs = write_matrix(dir.path(), "x.csv", &x);
    let out = dir.path().join("sim");
    let o = oisma(&[
        "simulate",
        "--inputs",
        &inputs,
        "--weights",
        &weights.join(","),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("broadcast chunk 0 -> 1,2,3"));
    // two rows of two chunks each, read once for all three matrices
    assert!(text.contains("input_reads=4 input_vector_loads=2"));
    assert!(text.contains("single/vmm mult energy ratio = 1.2135"));
    assert!(text.contains("and phase=1"));
    for m in 0..3 {
        let o =
            MatrixReal::from_csv(&fs::read_to_string(out.join(format!("output_{m}.csv"))).unwrap())
                .unwrap();
        assert_eq!(o.shape(), (2, 16));
    }
}

#[test]
fn simulate_shape_error() {
    let dir = tempfile::tempdir().unwrap();
    let x = write_matrix(dir.path(), "x.csv", &MatrixReal::zeros(1, 8));
    let w = write_matrix(dir.path(), "w.csv", &MatrixReal::zeros(9, 2));
    let o = oisma(&["simulate", "--inputs", &x, "--weights", &w]);
    assert_eq!(o.status.code(), Some(1));
}
