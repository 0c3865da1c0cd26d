use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use oisma_core::bench::{
    bench_mapping, bench_matmul, bench_multiply, report_metrics, simulate_workload, BenchConfig,
    Metadata, DEFAULT_DIMS, DEFAULT_WORK_CAP,
};
use oisma_core::bp::{parse_dataset, validate_dataset};
use oisma_core::minifloat::NormalizedGrid;
use oisma_core::perf::{metrics_csv, metrics_table};
use oisma_core::{default_dataset, load_dataset, BpDataset, Inventory, MatrixReal, PerfConfig};

#[derive(Parser)]
#[command(
    name = "oisma",
    version,
    about = "Bent-Pyramid stochastic multiplication: benchmarks and array simulation"
)]
struct Cli {
    /// BP10 dataset file; the built-in dataset is used if omitted
    #[arg(long, global = true, value_name = "PATH")]
    dataset: Option<PathBuf>,

    /// Write CSV/report files into this directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Print CSV to stdout
    #[arg(long, global = true, conflicts_with = "table")]
    csv: bool,

    /// Print a human-readable summary to stdout (default)
    #[arg(long, global = true)]
    table: bool,

    /// Energy/geometry/node config (TOML); the shipped defaults are used if omitted
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check or print a BP10 dataset
    Dataset {
        #[command(subcommand)]
        action: DatasetAction,
    },
    /// Accuracy benchmarks
    Bench {
        #[command(subcommand)]
        which: BenchKind,
    },
    /// Run matrices through the simulated arrays
    Simulate(SimulateArgs),
    /// Energy, throughput and area metrics
    Metrics {
        /// Scaled node from the config, repeatable; all configured nodes if omitted
        #[arg(long)]
        node: Vec<String>,
    },
    /// The 119 positive FP8 values normalized to (0, 1]
    Grid,
}

#[derive(Subcommand)]
enum DatasetAction {
    /// Report every broken invariant; exit 1 if there is any
    Validate { path: PathBuf },
    /// Print a dataset and its product table
    Dump { path: Option<PathBuf> },
}

#[derive(Subcommand)]
enum BenchKind {
    /// Mapping error of the normalized FP8 grid onto FP8 and BP10
    Mapping,
    /// All 14,161 pairwise products of the normalized grid
    Multiply,
    /// Relative Frobenius error of random NxN products
    Matmul(MatmulArgs),
}

#[derive(Args)]
struct MatmulArgs {
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_DIMS)]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Maximum total work, counted as the sum of N^3 x trials
    #[arg(long, default_value_t = DEFAULT_WORK_CAP)]
    work_cap: u128,
    /// Ignore the work cap
    #[arg(long)]
    allow_large: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Input matrix X (CSV, entries in [0, 1])
    #[arg(long)]
    inputs: PathBuf,
    /// Weight matrices sharing X's column count, comma-separated
    #[arg(long, value_delimiter = ',', required = true)]
    weights: Vec<PathBuf>,
    #[arg(long, default_value_t = 64)]
    banks: usize,
    #[arg(long, default_value_t = 4)]
    arrays_per_bank: usize,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn dataset(cli: &Cli) -> Result<BpDataset> {
    match &cli.dataset {
        None => Ok(default_dataset()),
        Some(p) => {
            load_dataset(&read(p)?).with_context(|| format!("loading dataset {}", p.display()))
        }
    }
}

fn perf_config(cli: &Cli) -> Result<PerfConfig> {
    match &cli.config {
        None => Ok(PerfConfig::default()),
        Some(p) => PerfConfig::from_toml(&read(p)?)
            .with_context(|| format!("loading config {}", p.display())),
    }
}

/// One output artifact: a file name for `--out`, and the CSV body.
struct Artifact {
    file: String,
    body: String,
    /// Also printed by `--csv`.
    stdout: bool,
}

/// Writes artifacts to `--out`, prints CSV for `--csv`, otherwise the summary.
fn emit(cli: &Cli, meta: Option<&Metadata>, artifacts: &[Artifact], summary: &str) -> Result<()> {
    let header = meta.map(Metadata::to_comments).unwrap_or_default();
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for a in artifacts {
            let path = dir.join(&a.file);
            fs::write(&path, format!("{header}{}", a.body))
                .with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
    }
    if cli.csv {
        print!("{header}");
        for a in artifacts.iter().filter(|a| a.stdout) {
            print!("{}", a.body);
        }
    } else {
        print!("{summary}");
    }
    Ok(())
}

fn artifact(file: &str, body: String) -> Artifact {
    Artifact {
        file: file.into(),
        body,
        stdout: true,
    }
}

fn run_dataset(action: &DatasetAction) -> Result<bool> {
    match action {
        DatasetAction::Validate { path } => {
            let d = parse_dataset(&read(path)?)
                .with_context(|| format!("parsing {}", path.display()))?;
            let violations = validate_dataset(&d);
            for v in &violations {
                println!("{v}");
            }
            if violations.is_empty() {
                println!("{}: ok", path.display());
            }
            Ok(violations.is_empty())
        }
        DatasetAction::Dump { path } => {
            let d = match path {
                Some(p) => {
                    load_dataset(&read(p)?).with_context(|| format!("loading {}", p.display()))?
                }
                None => default_dataset(),
            };
            print!("{}", d.to_text());
            println!("# ones in right[i] AND left[j]; rows i = 0.0..0.9");
            for row in d.product_table() {
                let cells: Vec<String> = row.iter().map(|n| n.to_string()).collect();
                println!("# {}", cells.join(" "));
            }
            Ok(true)
        }
    }
}

fn run_bench(cli: &Cli, which: &BenchKind) -> Result<()> {
    let d = dataset(cli)?;
    match which {
        BenchKind::Mapping => {
            let r = bench_mapping();
            let meta = Metadata::new(0, &d);
            emit(
                cli,
                Some(&meta),
                &[artifact("mapping.csv", r.to_csv())],
                &r.summary(),
            )
        }
        BenchKind::Multiply => {
            let r = bench_multiply(&d);
            let meta = Metadata::new(0, &d);
            emit(
                cli,
                Some(&meta),
                &[artifact("multiply.csv", r.to_csv())],
                &r.summary(),
            )
        }
        BenchKind::Matmul(a) => {
            let cfg = BenchConfig {
                seed: a.seed,
                dims: a.dims.clone(),
                trials: a.trials,
                work_cap: a.work_cap,
                allow_large: a.allow_large,
            };
            let r = bench_matmul(&cfg, &d)?;
            let meta = Metadata::new(a.seed, &d);
            emit(
                cli,
                Some(&meta),
                &[
                    artifact("matmul.csv", r.to_csv()),
                    Artifact {
                        stdout: false,
                        ..artifact("matmul_means.csv", r.means_csv())
                    },
                ],
                &r.summary(),
            )
        }
    }
}

fn run_simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let d = dataset(cli)?;
    let load = |p: &PathBuf| {
        MatrixReal::from_csv(&read(p)?).with_context(|| format!("parsing {}", p.display()))
    };
    let x = load(&a.inputs)?;
    let ws = a.weights.iter().map(load).collect::<Result<Vec<_>>>()?;
    let inventory = Inventory {
        banks: a.banks,
        arrays_per_bank: a.arrays_per_bank,
    };
    let r = simulate_workload(&x, &ws, &d, inventory, &perf_config(cli)?)?;
    let outputs: Vec<Artifact> = r
        .execution
        .outputs
        .iter()
        .enumerate()
        .map(|(m, o)| artifact(&format!("output_{m}.csv"), o.to_csv()))
        .collect();
    let mut summary = r.to_text();
    for (m, o) in r.execution.outputs.iter().enumerate() {
        summary.push_str(&format!("# output {m} ({}x{})\n{o}", o.rows(), o.cols()));
    }
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("simulate.txt"), r.to_text())?;
    }
    emit(cli, None, &outputs, &summary)
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Dataset { action } => return run_dataset(action),
        Command::Bench { which } => run_bench(cli, which)?,
        Command::Simulate(a) => run_simulate(cli, a)?,
        Command::Metrics { node } => {
            let cfg = perf_config(cli)?;
            let nodes: Vec<&str> = if node.is_empty() {
                cfg.nodes.keys().map(String::as_str).collect()
            } else {
                node.iter().map(String::as_str).collect()
            };
            let reports = report_metrics(&cfg, &nodes)?;
            emit(
                cli,
                None,
                &[artifact("metrics.csv", metrics_csv(&reports))],
                &metrics_table(&reports),
            )?;
        }
        Command::Grid => {
            let g = NormalizedGrid::new();
            let summary = format!(
                "{} values, max raw {}\n",
                g.len(),
                g.raw.last().copied().unwrap_or(0.0)
            );
            emit(cli, None, &[artifact("grid.csv", g.to_csv())], &summary)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        // usage errors exit 2, --help and --version exit 0
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
