//! Command-line front end: fit a model, select the number of latent classes,
//! run the simulation experiments, score estimates, or compute modularity.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
//! Diagnostics and machine-readable errors go to standard error; data goes to
//! files and standard output.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gom::io::{
    read_f64_csv, read_matrix, read_result, write_result_with_drops, MatrixFormat,
};
use gom::metrics;
use gom::{
    fit, purity_proportions, select_k, FitConfig, GomError, ItemParams,
    MembershipMatrix, Method, ResponseData, Tau,
};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "gom",
    about = "Mixed-membership estimation for categorical data",
    version
)]
struct Cli {
    /// Worker threads for inner parallelism (default: GOM_THREADS or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write the estimation result document.
    Fit(FitArgs),
    /// Estimate the number of latent classes by fuzzy modularity.
    SelectK(SelectKArgs),
    /// Run one of the simulation experiments.
    Simulate(SimulateArgs),
    /// Score an estimate against a reference with permutation alignment.
    Metrics(MetricsArgs),
    /// Fuzzy modularity of a membership matrix on the given responses.
    Modularity(ModularityArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Response matrix file.
    #[arg(long)]
    input: PathBuf,
    /// Input format.
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: MatrixFormat,
    /// Response ceiling M; inferred from the data when omitted.
    #[arg(long)]
    m_max: Option<u32>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Number of latent classes.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    k: u32,
    /// Fitting algorithm.
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Regularizer: "auto" for M*max(N,J) or an explicit nonnegative value.
    #[arg(long, default_value = "auto", value_parser = parse_tau)]
    tau: Tau,
    /// Margin band width for cone corner candidates.
    #[arg(long, default_value_t = 1.0)]
    margin_slack: f64,
    /// Per-triplet relative residual target of the truncated SVD.
    #[arg(long, default_value_t = 1e-10)]
    svd_tol: f64,
    /// Where to write the result document.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SelectKArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    k_min: u32,
    #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u32).range(1..))]
    k_max: u32,
    #[arg(long, default_value = "auto", value_parser = parse_tau)]
    tau: Tau,
    #[arg(long, default_value_t = 1.0)]
    margin_slack: f64,
    /// Where to write the (k, Q) curve CSV.
    #[arg(long)]
    curve_out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment number (1: regularizer sweep, 2: sparsity sweep, 3: size
    /// sweep, 4: toy setting).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    experiment: u8,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    reps: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the long-format and summary CSV files.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated subset of srsc,crsc,ssc,srm.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
    /// Also run model selection per repetition and record the chosen k.
    #[arg(long)]
    select_k: bool,
    /// Upper end of the selection scan.
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u32).range(1..))]
    select_k_max: u32,
    /// Record wall-clock runtimes (makes outputs non-reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct MetricsArgs {
    /// Estimate: a float CSV or a result document (.json).
    #[arg(long)]
    est: PathBuf,
    /// Reference: a float CSV or a result document (.json).
    #[arg(long)]
    truth: PathBuf,
    /// Which matrix to compare.
    #[arg(long, value_parser = ["pi", "theta"])]
    kind: String,
}

#[derive(Args)]
struct ModularityArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Membership matrix as float CSV.
    #[arg(long)]
    pi: PathBuf,
    /// Optionally export the materialized adjacency matrix as CSV.
    #[arg(long)]
    export_adjacency: Option<PathBuf>,
}

fn parse_format(s: &str) -> Result<MatrixFormat, String> {
    MatrixFormat::parse(s).map_err(|e| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

fn parse_tau(s: &str) -> Result<Tau, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Tau::Auto);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| format!("expected 'auto' or a number, got '{s}'"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("tau must be finite and nonnegative, got {v}"));
    }
    Ok(Tau::Fixed(v))
}

struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            kind: "usage",
            message: message.into(),
        }
    }
}

impl From<GomError> for Failure {
    fn from(e: GomError) -> Self {
        let (code, kind) = match &e {
            GomError::EntryOutOfRange { .. }
            | GomError::Format { .. }
            | GomError::InvalidArgument(_)
            | GomError::DegenerateInput(_)
            | GomError::UnsupportedK { .. }
            | GomError::Io(_) => (EXIT_DATA, "data"),
            GomError::ZeroRowSum { .. }
            | GomError::DegenerateRow { .. }
            | GomError::RankDeficient { .. }
            | GomError::IllConditioned { .. }
            | GomError::NoCone(_)
            | GomError::InsufficientCorners { .. }
            | GomError::SelectionFailed => (EXIT_NUMERICAL, "numerical"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("{e}");
            emit_error_json(EXIT_USAGE, "usage", &e.to_string());
            return ExitCode::from(EXIT_USAGE);
        }
    };

    if let Err(f) = setup_threads(cli.threads) {
        emit_error_json(f.code, f.kind, &f.message);
        return ExitCode::from(f.code);
    }

    let outcome = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::SelectK(args) => cmd_select_k(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Modularity(args) => cmd_modularity(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            emit_error_json(f.code, f.kind, &f.message);
            ExitCode::from(f.code)
        }
    }
}

fn emit_error_json(code: u8, kind: &str, message: &str) {
    let doc = serde_json::json!({
        "error": { "code": code, "kind": kind, "message": message }
    });
    eprintln!("{doc}");
}

fn setup_threads(threads: Option<usize>) -> Result<(), Failure> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var("GOM_THREADS") {
            Ok(v) => Some(
                v.parse::<usize>()
                    .map_err(|_| Failure::usage(format!("GOM_THREADS must be an integer, got '{v}'")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Failure::usage("thread count must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<(), Failure> {
    let ingested = read_matrix(&args.input.input, args.input.format, args.input.m_max)?;
    if !ingested.dropped_rows.is_empty() {
        eprintln!(
            "dropped {} all-zero subject rows: {:?}",
            ingested.dropped_rows.len(),
            ingested.dropped_rows
        );
    }
    let cfg = FitConfig::new(args.k as usize)
        .with_tau(args.tau)
        .with_margin_slack(args.margin_slack)
        .with_svd_tol(args.svd_tol);
    let result = fit(args.method, &ingested.matrix, &cfg)?;
    write_result_with_drops(&result, &ingested.dropped_rows, &args.output)?;
    let (mu, nu) = purity_proportions(&result.pi_hat);
    let sigma_k = result
        .singular_values
        .last()
        .map(|s| s.to_string())
        .unwrap_or_else(|| "n/a".into());
    println!(
        "method={} k={} sigma_k={} mu={:.4} nu={:.4} elapsed_s={:.4}",
        result.method,
        args.k,
        sigma_k,
        mu,
        nu,
        result.elapsed
    );
    Ok(())
}

fn cmd_select_k(args: SelectKArgs) -> Result<(), Failure> {
    let (k_min, k_max) = (args.k_min as usize, args.k_max as usize);
    if k_min > k_max {
        return Err(Failure::usage(format!(
            "--k-min {k_min} exceeds --k-max {k_max}"
        )));
    }
    let ingested = read_matrix(&args.input.input, args.input.format, args.input.m_max)?;
    let k_max = k_max.min(
        ingested
            .matrix
            .n_subjects()
            .min(ingested.matrix.n_items()),
    );
    let cfg = FitConfig::new(k_min)
        .with_tau(args.tau)
        .with_margin_slack(args.margin_slack);
    let curve = select_k(&ingested.matrix, args.method, k_min, k_max, &cfg)?;
    if let Some(path) = &args.curve_out {
        let file = File::create(path).map_err(GomError::from)?;
        curve.write_csv(file)?;
    }
    for (k, diag) in curve.k_values.iter().zip(&curve.diagnostics) {
        if let Some(msg) = diag {
            eprintln!("k={k}: fit failed: {msg}");
        }
    }
    println!("{}", curve.argmax_k);
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut cfg = gom::ExperimentConfig::preset(args.experiment, args.reps, args.seed)?;
    if let Some(methods) = args.methods {
        if methods.is_empty() {
            return Err(Failure::usage("--methods must name at least one method"));
        }
        cfg.methods = methods;
    }
    if args.select_k {
        cfg.select_k_range = Some((1, args.select_k_max as usize));
    }
    cfg.timing = args.timing;
    let table = gom::run_experiment(&cfg)?;
    fs::create_dir_all(&args.out).map_err(GomError::from)?;
    let long_path = args.out.join(format!("experiment{}_long.csv", args.experiment));
    let summary_path = args
        .out
        .join(format!("experiment{}_summary.csv", args.experiment));
    table.write_csv(File::create(&long_path).map_err(GomError::from)?)?;
    table.write_summary_csv(File::create(&summary_path).map_err(GomError::from)?)?;
    println!(
        "wrote {} rows to {} and summary to {}",
        table.rows.len(),
        long_path.display(),
        summary_path.display()
    );
    Ok(())
}

/// Loads a matrix from a float CSV or from the named field of a result document.
fn load_metric_matrix(path: &Path, kind: &str) -> Result<ndarray::Array2<f64>, Failure> {
    if path.extension().is_some_and(|e| e == "json") {
        let doc = read_result(path)?;
        let rows = if kind == "pi" { &doc.pi_hat } else { &doc.theta_hat };
        let width = rows.first().map(Vec::len).unwrap_or(0);
        let mut out = ndarray::Array2::<f64>::zeros((rows.len(), width));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(GomError::InvalidArgument(format!(
                    "ragged matrix in {}",
                    path.display()
                ))
                .into());
            }
            for (j, &v) in row.iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    } else {
        Ok(read_f64_csv(path)?)
    }
}

fn cmd_metrics(args: MetricsArgs) -> Result<(), Failure> {
    let est = load_metric_matrix(&args.est, &args.kind)?;
    let truth = load_metric_matrix(&args.truth, &args.kind)?;
    let aligned = if args.kind == "pi" {
        metrics::hamming_error(
            &MembershipMatrix::new(est)?,
            &MembershipMatrix::new(truth)?,
        )?
    } else {
        metrics::relative_error(&ItemParams::new(est)?, &ItemParams::new(truth)?)?
    };
    let perm: Vec<String> = aligned.permutation.iter().map(usize::to_string).collect();
    println!("value={} permutation=[{}]", aligned.value, perm.join(","));
    Ok(())
}

fn cmd_modularity(args: ModularityArgs) -> Result<(), Failure> {
    let ingested = read_matrix(&args.input.input, args.input.format, args.input.m_max)?;
    let pi = MembershipMatrix::new(read_f64_csv(&args.pi)?)?;
    if pi.n_subjects() != ingested.matrix.n_subjects() {
        return Err(GomError::InvalidArgument(format!(
            "memberships cover {} subjects, responses have {} after cleanup",
            pi.n_subjects(),
            ingested.matrix.n_subjects()
        ))
        .into());
    }
    let q = gom::fuzzy_modularity_from_data(&ingested.matrix, &pi)?;
    if let Some(path) = &args.export_adjacency {
        let (a, _d, _omega) = gom::adjacency(&ingested.matrix)?;
        let mut file = File::create(path).map_err(GomError::from)?;
        gom::io::write_f64_csv(a.view(), &mut file)?;
    }
    println!("{q}");
    Ok(())
}
