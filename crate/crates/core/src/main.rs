use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use demm::baselines::BaselineSpec;
use demm::engine::DemmConfig;
use demm::experiment::{self, Experiment, Job, Verification, CAVEATS};
use demm::functional::GemmDims;
use demm::sparse::{PackedSparseMatrix, SparsityPattern};
use demm::text::{read_matrix, MatrixFile};
use demm::workloads::{load_layer_file, problem_from_dense_weights, WeightMode};
use demm::{DemmError, Execution};

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_DIMENSIONS: u8 = 4;
const EXIT_CONFIG: u8 = 5;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "demm", version, about = "Cycle-level model of a decoupled sparse x dense matrix engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate every layer (or one GEMM) on each engine and baseline.
    Run(RunArgs),
    /// Run the same workload at several patterns; one summary row per (pattern, engine).
    SweepDensity(SweepArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Layer shape file (JSON).
    #[arg(long, group = "workload")]
    layers: Option<PathBuf>,
    /// Single GEMM of shape RxKxC with synthetic operands.
    #[arg(long, group = "workload", value_parser = parse_gemm)]
    gemm: Option<GemmDims>,
    /// Engine `demm:N,M,C,k`; repeatable. Defaults to demm:8,128,64,8.
    #[arg(long = "engine", value_parser = parse_engine)]
    engines: Vec<DemmConfig>,
    /// Baseline `<dense|sparse>-<ws|os>:<rows>x<cols>`; repeatable.
    #[arg(long = "baseline", value_parser = parse_baseline)]
    baselines: Vec<BaselineSpec>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Check engine output against the functional reference (the default).
    #[arg(long, conflicts_with = "no_verify")]
    verify: bool,
    /// Skip the functional check (rows then report verified=skipped).
    #[arg(long)]
    no_verify: bool,
    /// Batch size used for fully-connected layers.
    #[arg(long, default_value_t = 1)]
    fc_batch: usize,
    /// Run jobs on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Weight sparsity pattern N:M.
    #[arg(long, default_value = "8:128", value_parser = parse_pattern)]
    pattern: SparsityPattern,
    /// Sparse (or dense, to be pruned) weight matrix file; needs --matrix-b.
    #[arg(long, requires = "matrix_b", conflicts_with_all = ["layers", "gemm"])]
    matrix_a: Option<PathBuf>,
    /// Dense activation matrix file; needs --matrix-a.
    #[arg(long, requires = "matrix_a")]
    matrix_b: Option<PathBuf>,
    /// Write a per-cycle trace of the first job on the first engine.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Poisson non-zero counts per pattern block instead of exact N:M, e.g. `mean=8`.
    #[arg(long, value_parser = parse_overflow)]
    overflow_dist: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Patterns to sweep (repeatable, or comma separated).
    #[arg(long = "pattern", value_delimiter = ',', value_parser = parse_pattern)]
    patterns: Vec<SparsityPattern>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn parse_gemm(s: &str) -> Result<GemmDims, String> {
    s.parse().map_err(|e: DemmError| e.to_string())
}

fn parse_engine(s: &str) -> Result<DemmConfig, String> {
    s.parse().map_err(|e: DemmError| e.to_string())
}

fn parse_baseline(s: &str) -> Result<BaselineSpec, String> {
    s.parse().map_err(|e: DemmError| e.to_string())
}

fn parse_pattern(s: &str) -> Result<SparsityPattern, String> {
    s.parse().map_err(|e: DemmError| e.to_string())
}

fn parse_overflow(s: &str) -> Result<f64, String> {
    let v = s
        .strip_prefix("mean=")
        .ok_or_else(|| format!("`{s}` is not mean=<f>"))?;
    let mean: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    if !mean.is_finite() || mean < 0.0 {
        return Err(format!("mean {mean} must be finite and >= 0"));
    }
    Ok(mean)
}

enum Failure {
    Usage(String),
    Lib(DemmError),
    Verification(usize),
}

impl From<DemmError> for Failure {
    fn from(e: DemmError) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(e: &DemmError) -> u8 {
    match e {
        DemmError::Io { .. } => EXIT_IO,
        DemmError::Parse { .. } | DemmError::MalformedMatrix(_) => EXIT_PARSE,
        DemmError::DimensionMismatch(_) | DemmError::ColumnOutOfRange { .. } => EXIT_DIMENSIONS,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let res = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::SweepDensity(a) => cmd_sweep(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Verification(n)) => {
            eprintln!("error: {n} engine result(s) differ from the functional reference");
            ExitCode::from(EXIT_VERIFY_FAILED)
        }
    }
}

fn jobs_from(common: &Common) -> Result<Vec<Job>, Failure> {
    if let Some(path) = &common.layers {
        let layers = load_layer_file(path)?;
        return Ok(layers
            .into_iter()
            .map(|l| Job::Layer(l.with_fc_batch(common.fc_batch)))
            .collect());
    }
    if let Some(dims) = common.gemm {
        return Ok(vec![Job::Gemm {
            name: format!("gemm_{}x{}x{}", dims.r, dims.kdim, dims.cdim),
            dims,
        }]);
    }
    Err(Failure::Usage(
        "no workload: pass --layers <file>, --gemm RxKxC or --matrix-a/--matrix-b".into(),
    ))
}

fn experiment_from(common: &Common, weights: WeightMode) -> Result<Experiment, Failure> {
    if common.fc_batch == 0 {
        return Err(Failure::Usage("--fc-batch must be positive".into()));
    }
    let engines = if common.engines.is_empty() {
        vec![DemmConfig::new(8, 128, 64, 8)?]
    } else {
        common.engines.clone()
    };
    Ok(Experiment {
        engines,
        baselines: common.baselines.clone(),
        weights,
        seed: common.seed,
        verify: !common.no_verify,
        trace: false,
        exec: if common.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
    })
}

fn explicit_job(a_path: &Path, b_path: &Path, pattern: SparsityPattern) -> Result<Job, Failure> {
    let b = match read_matrix(b_path)? {
        MatrixFile::Dense(b) => b,
        MatrixFile::Sparse(s) => demm::sparse::unpack(&s),
    };
    let name = a_path
        .file_stem()
        .map_or_else(|| "matrix".to_string(), |s| s.to_string_lossy().into_owned());
    let a: PackedSparseMatrix = match read_matrix(a_path)? {
        MatrixFile::Sparse(a) => a,
        MatrixFile::Dense(d) => problem_from_dense_weights(&name, &d, pattern, b.clone())?.a,
    };
    if a.cols() != b.rows() {
        return Err(DemmError::DimensionMismatch(format!(
            "{} has {} columns but {} has {} rows",
            a_path.display(),
            a.cols(),
            b_path.display(),
            b.rows()
        ))
        .into());
    }
    Ok(Job::Explicit { name, a, b })
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|source| {
        Failure::Lib(DemmError::Io {
            path: dir.to_path_buf(),
            source,
        })
    })
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, Failure> {
    fs::File::create(path).map(BufWriter::new).map_err(|source| {
        Failure::Lib(DemmError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn write_rows<T: serde::Serialize>(common: &Common, kind: &str, rows: &[T]) -> Result<PathBuf, Failure> {
    prepare_out(&common.out)?;
    let path = match common.format {
        Format::Csv => common.out.join("results.csv"),
        Format::Json => common.out.join("results.json"),
    };
    let w = create(&path)?;
    match common.format {
        Format::Csv => experiment::write_csv(rows, w)?,
        Format::Json => experiment::write_json(kind, rows, w)?,
    }
    let caveats = common.out.join("caveats.txt");
    fs::write(&caveats, CAVEATS.join("\n") + "\n").map_err(|source| {
        Failure::Lib(DemmError::Io {
            path: caveats.clone(),
            source,
        })
    })?;
    Ok(path)
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let weights = match args.overflow_dist {
        Some(mean) => WeightMode::Overflow {
            block: args.pattern.m(),
            mean,
        },
        None => WeightMode::Pattern(args.pattern),
    };
    let jobs = match (&args.matrix_a, &args.matrix_b) {
        (Some(a), Some(b)) => vec![explicit_job(a, b, args.pattern)?],
        _ => jobs_from(&args.common)?,
    };
    let mut exp = experiment_from(&args.common, weights)?;
    exp.trace = args.trace.is_some();
    let out = exp.run(&jobs)?;

    if let (Some(path), Some(trace)) = (&args.trace, &out.trace) {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            prepare_out(parent)?;
        }
        trace.write_to(create(path)?).map_err(|source| {
            Failure::Lib(DemmError::Io {
                path: path.clone(),
                source,
            })
        })?;
    }
    let path = write_rows(&args.common, "run", &out.rows)?;
    print_summary(&experiment::summarize(&out.rows));
    println!("wrote {}", path.display());

    let failed = out.rows.iter().filter(|r| r.verified == Verification::Failed).count();
    if failed > 0 {
        return Err(Failure::Verification(failed));
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    if args.patterns.is_empty() {
        return Err(Failure::Usage("sweep-density needs at least one --pattern N:M".into()));
    }
    let jobs = jobs_from(&args.common)?;
    let exp = experiment_from(&args.common, WeightMode::Pattern(args.patterns[0]))?;
    let rows = exp.sweep(&jobs, &args.patterns)?;
    let path = write_rows(&args.common, "sweep-density", &rows)?;
    print_summary(&rows);
    println!("wrote {}", path.display());
    let failed = rows.iter().filter(|r| r.verified == Verification::Failed).count();
    if failed > 0 {
        return Err(Failure::Verification(failed));
    }
    Ok(())
}

fn print_summary(rows: &[experiment::SummaryRow]) {
    println!(
        "{:<24} {:<22} {:>7} {:>14} {:>7} {:>9}",
        "engine", "pattern", "layers", "total_cycles", "util", "verified"
    );
    for r in rows {
        println!(
            "{:<24} {:<22} {:>7} {:>14} {:>7.3} {:>9}",
            r.engine,
            r.pattern,
            r.layers,
            r.total_cycles,
            r.mac_utilization,
            r.verified.as_str()
        );
    }
}
