use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use spgemm3d::bench::{bench, to_csv, BenchConfig};
use spgemm3d::cost::{sweep_plan, MachineParams, SweepStats};
use spgemm3d::grid::{distribute_a, distribute_b, make_grid, valid_layer_counts};
use spgemm3d::io::{read_matrix_market, write_matrix_market};
use spgemm3d::report::RunReport;
use spgemm3d::summa::{multiply, symbolic3d, BatchAxis, BatchConsumer, TopKPruner};
use spgemm3d::verify::verify_sweep;
use spgemm3d::{Batches, FloatMat, FloatSemiring, Kernel, SummaConfig, SummaError, WorldConfig};

#[derive(Parser)]
#[command(name = "spgemm3d", version, about = "Batched 3D sparse SUMMA on a simulated process grid")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Multiply matrices and write C plus a JSON run report.
    Multiply(MultiplyArgs),
    /// Run the symbolic step and print the batch plan.
    Symbolic(InputArgs),
    /// Rank layer counts with the cost model.
    Plan(PlanArgs),
    /// Run a benchmark configuration.
    Bench(BenchArgs),
    /// Compare distributed products with the dense oracle over a sweep.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Left operand, Matrix Market.
    #[arg(long)]
    a: PathBuf,
    /// Right operand, Matrix Market.
    #[arg(long, conflicts_with_all = ["square", "aat"])]
    b: Option<PathBuf>,
    /// Multiply A by itself.
    #[arg(long, conflicts_with = "aat")]
    square: bool,
    /// Multiply A by its transpose.
    #[arg(long)]
    aat: bool,
    #[arg(long, default_value_t = 1)]
    procs: usize,
    #[arg(long, default_value_t = 1)]
    layers: usize,
    /// Aggregate memory in bytes.
    #[arg(long)]
    memory: Option<u64>,
    #[arg(long, default_value_t = 24)]
    record_bytes: u64,
    #[arg(long, default_value_t = 1.0)]
    headroom: f64,
    #[arg(long, default_value = "hash")]
    kernel: Kernel,
}

#[derive(Args)]
struct MultiplyArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Batch count, or `auto` to plan it.
    #[arg(long, default_value = "auto")]
    batches: String,
    /// Batch by rows of C instead of columns.
    #[arg(long)]
    rows: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep only the k largest entries of each output column.
    #[arg(long)]
    prune_topk: Option<usize>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    /// JSON with nnz_a, nnz_b, flops and optional layer_nnz.
    #[arg(long)]
    stats: PathBuf,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long)]
    procs: usize,
    #[arg(long)]
    memory: u64,
    #[arg(long, default_value_t = 24)]
    record_bytes: u64,
    /// Candidate layer counts; all valid ones when omitted.
    #[arg(long, value_delimiter = ',')]
    layers: Vec<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// JSON report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    max_n: usize,
    /// JSON report path; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

enum Failure {
    Usage(anyhow::Error),
    Memory(anyhow::Error),
    Verify(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<SummaError>() {
            Some(SummaError::InsufficientMemory { .. } | SummaError::MemoryBudgetExceeded { .. }) => Failure::Memory(e),
            _ => Failure::Usage(e),
        }
    }
}

impl From<SummaError> for Failure {
    fn from(e: SummaError) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = std::env::var("SPGEMM_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let result = match cli.cmd {
        Cmd::Multiply(a) => run_multiply(a),
        Cmd::Symbolic(a) => run_symbolic(a),
        Cmd::Plan(a) => run_plan(a),
        Cmd::Bench(a) => run_bench(a),
        Cmd::Verify(a) => run_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Memory(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Verify(e)) => {
            eprintln!("verification failed: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn load_operands(input: &InputArgs) -> anyhow::Result<(FloatMat, FloatMat)> {
    let a: FloatMat = read_matrix_market(&input.a).with_context(|| format!("reading {}", input.a.display()))?;
    let b = match (&input.b, input.square, input.aat) {
        (Some(path), false, false) => read_matrix_market(path).with_context(|| format!("reading {}", path.display()))?,
        (None, true, false) => a.clone(),
        (None, false, true) => a.transpose(),
        _ => return Err(anyhow!("give exactly one of --b, --square, --aat")),
    };
    Ok((a, b))
}

fn config(input: &InputArgs, retain: bool) -> SummaConfig {
    SummaConfig {
        kernel: input.kernel,
        world: WorldConfig {
            record_bytes: input.record_bytes,
            ..WorldConfig::default()
        },
        memory: input.memory,
        headroom: input.headroom,
        verify_plan: true,
        retain,
    }
}

fn write_json(path: Option<&Path>, json: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, format!("{json}\n")).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn run_multiply(args: MultiplyArgs) -> Result<(), Failure> {
    let (a, b) = load_operands(&args.input)?;
    let batches = match args.batches.as_str() {
        "auto" => Batches::Auto,
        s => Batches::Fixed(
            s.parse()
                .map_err(|_| Failure::Usage(anyhow!("--batches takes a positive count or 'auto', got '{s}'")))?,
        ),
    };
    let axis = if args.rows { BatchAxis::Rows } else { BatchAxis::Columns };
    let sr = FloatSemiring::new();
    let (out_rows, out_cols) = (a.nrows(), b.ncols());
    let mut pruner = args.prune_topk.map(|k| match axis {
        BatchAxis::Columns => TopKPruner::new(k, out_rows, out_cols),
        BatchAxis::Rows => TopKPruner::new(k, out_cols, out_rows),
    });
    let cfg = config(&args.input, pruner.is_none());
    let consumer = pruner.as_mut().map(|p| p as &mut dyn BatchConsumer<f64>);
    let product = multiply(&a, &b, args.input.procs, args.input.layers, sr, batches, axis, consumer, &cfg)?;
    let c = match (product.c, pruner) {
        (Some(c), _) => c,
        (None, Some(p)) => {
            let m = p.into_matrix(sr);
            match axis {
                BatchAxis::Columns => m,
                BatchAxis::Rows => m.transpose(),
            }
        }
        (None, None) => unreachable!("output is retained unless pruned"),
    };
    if let Some(path) = &args.out {
        write_matrix_market(&c, path).with_context(|| format!("writing {}", path.display()))?;
    }
    let report = RunReport::new(&product.run, Some(c.nnz() as u64));
    let json = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
    match &args.report {
        Some(p) => write_json(Some(p), &json)?,
        None if args.out.is_none() => write_json(None, &json)?,
        None => eprintln!("C: {}x{} with {} nonzeros in {} batches", c.nrows(), c.ncols(), c.nnz(), product.run.batches),
    }
    Ok(())
}

fn run_symbolic(args: InputArgs) -> Result<(), Failure> {
    let (a, b) = load_operands(&args)?;
    if a.ncols() != b.nrows() {
        return Err(Failure::Usage(anyhow!("cannot multiply {:?} by {:?}", a.shape(), b.shape())));
    }
    let grid = make_grid(args.procs, args.layers).map_err(|e| Failure::Usage(e.into()))?;
    let sym = symbolic3d(&distribute_a(&a, grid), &distribute_b(&b, grid), &config(&args, false))?;
    let json = serde_json::to_string_pretty(&sym.plan).map_err(anyhow::Error::from)?;
    write_json(None, &json)?;
    Ok(())
}

fn run_plan(args: PlanArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.stats).with_context(|| format!("reading {}", args.stats.display()))?;
    let stats: SweepStats = serde_json::from_str(&text).context("parsing stats")?;
    let machine = MachineParams {
        alpha: args.alpha,
        beta: args.beta,
        gamma: args.gamma,
        p: args.procs,
        memory: args.memory,
        record_bytes: args.record_bytes,
    };
    let layers = if args.layers.is_empty() {
        valid_layer_counts(args.procs)
    } else {
        args.layers
    };
    let sweep = sweep_plan(&stats, &machine, &layers).map_err(|e| match e {
        spgemm3d::cost::CostError::InsufficientAggregateMemory { .. } => Failure::Memory(e.into()),
        other => Failure::Usage(other.into()),
    })?;
    write_json(None, &serde_json::to_string_pretty(&sweep).map_err(anyhow::Error::from)?)?;
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let config: BenchConfig = serde_json::from_str(&text).context("parsing bench config")?;
    let report = bench(&config).map_err(anyhow::Error::from)?;
    if let Some(path) = &args.csv {
        std::fs::write(path, to_csv(&report)).with_context(|| format!("writing {}", path.display()))?;
    }
    write_json(args.out.as_deref(), &serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?)?;
    Ok(())
}

fn run_verify(args: VerifyArgs) -> Result<(), Failure> {
    let report = verify_sweep(args.seed, args.max_n)?;
    write_json(args.report.as_deref(), &serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?)?;
    let s = &report.summary;
    eprintln!("{} configurations, {} failures", s.configs, s.failures);
    if s.failures > 0 {
        return Err(Failure::Verify(anyhow!(
            "{} of {} configurations failed (oracle {}, symbolic {}, counters {}, lower bound {})",
            s.failures,
            s.configs,
            s.oracle_failures,
            s.symbolic_failures,
            s.counter_failures,
            s.lower_bound_failures
        )));
    }
    Ok(())
}
