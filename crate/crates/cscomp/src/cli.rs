//! Command-line interface: dataset generation, single solves, training,
//! and benchmark sweeps.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags or argument
//! values), 2 on runtime failures (missing files, solver errors, …).
//! `CSCOMP_THREADS` caps the rayon worker count for every subcommand.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::bench::{
    load_config, run_benchmark, write_metrics_csv, write_summary_csv, Algorithm,
    ExperimentConfig, SUMMARY_CSV_HEADER,
};
use crate::error::Error;
use crate::io::{read_cmpx, write_cmpx};
use crate::lamp::{load_model, save_model, train, TrainConfig};
use crate::linalg;
use crate::model::{
    build_sensing_matrix, generate_offgrid_channel, generate_sparse_sample,
    synthesize_measurements, MeasurementMatrix, SensingMatrix,
};
use crate::postprocess::prune_and_refit;
use crate::solvers::{
    amp_mmv, fista, niht, omp_mmv, FistaConfig, SolverResult, NIHT_DEFAULT_C,
    NIHT_DEFAULT_MAX_ITERS, NIHT_DEFAULT_TOL, OMP_DEFAULT_EPS, SOLVER_CSV_HEADER,
};

#[derive(Debug, Parser)]
#[command(name = "cscomp", version, about = "Row-sparse MMV compressed sensing for CSI feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the partial-DFT sensing matrix for an oversampling factor as CMPX.
    GenMatrix {
        #[arg(long, default_value_t = 1)]
        os: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw one test sample and write its measurements Y as CMPX.
    GenTest(GenTestArgs),
    /// Recover X̂ from measurements with one solver; prints a CSV result line.
    Solve(SolveArgs),
    /// Train an L-AMP-MMV model and save it as LMP1.
    Train(TrainArgs),
    /// Evaluate solvers on a fresh off-grid test set (a flag-level shortcut
    /// for `bench` with a single-purpose config).
    Eval(EvalArgs),
    /// Run a benchmark sweep from a JSON config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Per-sample metrics CSV.
        #[arg(long)]
        out: PathBuf,
        /// Optional per-cell summary CSV.
        #[arg(long)]
        summary_out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct GenTestArgs {
    #[arg(long, default_value_t = 1)]
    os: usize,
    #[arg(long, default_value_t = 10)]
    s: usize,
    #[arg(long, default_value_t = 16)]
    p: usize,
    /// Measurement SNR in dB; omit for noiseless.
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw an on-grid row-sparse sample instead of the off-grid channel.
    #[arg(long)]
    on_grid: bool,
    /// Output path for Y (CMPX), normalized to unit Frobenius norm.
    #[arg(long)]
    out: PathBuf,
    /// Also write the matching ground truth (CMPX, same normalization):
    /// the sparse X on-grid, or the clean frequency response off-grid.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// One of: omp, niht, fista, amp_mmv, lamp.
    #[arg(long)]
    alg: String,
    /// Sensing matrix as CMPX; built from --os when omitted.
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    os: usize,
    /// Measurements Y (CMPX).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    s: usize,
    /// LMP1 model, required for --alg lamp.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Write the recovered X̂ as CMPX.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_postprocess: bool,
    /// AMP iterations.
    #[arg(long, default_value_t = 20)]
    iters: usize,
    /// AMP threshold scale α.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Measure and report wall time (off by default for determinism).
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 1)]
    os: usize,
    #[arg(long, default_value_t = 20)]
    layers: usize,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 2)]
    pre_epochs: usize,
    #[arg(long, default_value_t = 5)]
    post_epochs: usize,
    /// Batches per epoch.
    #[arg(long, default_value_t = 1000)]
    batches: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 10)]
    s: usize,
    #[arg(long, default_value_t = 16)]
    p: usize,
    /// Training SNR in dB; omit for noiseless samples.
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output model path (LMP1).
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV of per-batch training losses.
    #[arg(long)]
    loss_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Algorithms, comma separated (e.g. omp,fista,lamp).
    #[arg(long, value_delimiter = ',', required = true)]
    alg: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize])]
    os: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [10usize])]
    s: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    p: usize,
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// LMP1 model per oversampling factor, as os=path (repeatable).
    #[arg(long = "model")]
    models: Vec<String>,
    #[arg(long)]
    no_postprocess: bool,
    #[arg(long)]
    timing: bool,
    /// AMP iterations.
    #[arg(long, default_value_t = 20)]
    iters: usize,
    /// AMP threshold scale α.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Per-sample metrics CSV.
    #[arg(long)]
    out: PathBuf,
    /// Optional per-cell summary CSV; summaries print to stdout otherwise.
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Entry point used by the `cscomp` binary.
pub fn main_from_env() -> i32 {
    run(std::env::args_os())
}

/// Parse `args` (including argv[0]) and execute; returns the exit code.
pub fn run<I>(args: I) -> i32
where
    I: IntoIterator,
    I::Item: Into<OsString> + Clone,
{
    init_thread_pool();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            1
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var("CSCOMP_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring invalid CSCOMP_THREADS={v:?}"),
        }
    }
}

/// Oversampling factor implied by a grid size N = 256·os + 1, or 0 when the
/// matrix did not come from the standard grid.
fn infer_os(n: usize) -> usize {
    if n > 1 && (n - 1) % 256 == 0 {
        (n - 1) / 256
    } else {
        0
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::GenMatrix { os, out } => {
            let f = build_sensing_matrix(os)?;
            write_cmpx(&out, f.entries())?;
            println!("wrote {}x{} sensing matrix (os={os}) to {}", f.m(), f.n(), out.display());
            Ok(())
        }
        Command::GenTest(args) => gen_test(args),
        Command::Solve(args) => solve(args),
        Command::Train(args) => run_train(args),
        Command::Eval(args) => eval(args),
        Command::Bench { config, out, summary_out } => {
            let cfg = load_config(&config)?;
            let report = run_benchmark(&cfg)?;
            write_metrics_csv(&out, &report.rows)?;
            println!("wrote {} metric rows to {}", report.rows.len(), out.display());
            if let Some(path) = summary_out {
                write_summary_csv(&path, &report.summaries)?;
                println!("wrote {} summary rows to {}", report.summaries.len(), path.display());
            }
            Ok(())
        }
    }
}

fn gen_test(args: GenTestArgs) -> CliResult<()> {
    let f = build_sensing_matrix(args.os)?;
    let (y_raw, truth_raw) = if args.on_grid {
        let x = generate_sparse_sample(f.n(), args.p, args.s, args.seed)?;
        let y = synthesize_measurements(&f, &x, args.snr, args.seed ^ 0x6e6f_6973)?;
        let truth = x.into_entries();
        (y, truth)
    } else {
        let (y, channel) = generate_offgrid_channel(args.p, args.s, &f, args.snr, args.seed)?;
        let clean = channel.frequency_response(&f)?.into_entries();
        (y, clean)
    };
    let norm = y_raw.norm();
    if norm == 0.0 {
        return Err(Error::DegenerateInput("drew a zero measurement matrix".into()).into());
    }
    let y = y_raw.entries().mapv(|z| z / norm);
    write_cmpx(&args.out, &y)?;
    println!(
        "wrote {} {}x{} measurement matrix to {}",
        if args.on_grid { "on-grid" } else { "off-grid" },
        y.nrows(),
        y.ncols(),
        args.out.display()
    );
    if let Some(path) = args.truth_out {
        let truth = truth_raw.mapv(|z| z / norm);
        write_cmpx(&path, &truth)?;
        println!("wrote matching truth to {}", path.display());
    }
    Ok(())
}

fn solve(args: SolveArgs) -> CliResult<()> {
    let alg = Algorithm::from_str(&args.alg).map_err(|e| usage(e.to_string()))?;
    let (f, os_label) = match &args.matrix {
        Some(path) => {
            let entries = read_cmpx(path)?;
            let f = SensingMatrix::from_entries(entries);
            let os = infer_os(f.n());
            (f, os)
        }
        None => (build_sensing_matrix(args.os)?, args.os),
    };
    let y = MeasurementMatrix::from_entries(read_cmpx(&args.data)?);
    if y.m() != f.m() {
        return Err(Error::Dimension(format!(
            "Y has {} rows but F has {} measurements",
            y.m(),
            f.m()
        ))
        .into());
    }
    let started = Instant::now();
    let solved = match alg {
        Algorithm::Omp => omp_mmv(&f, &y, args.s, OMP_DEFAULT_EPS)?,
        Algorithm::Niht => niht(&f, &y, args.s, NIHT_DEFAULT_C, NIHT_DEFAULT_MAX_ITERS, NIHT_DEFAULT_TOL)?,
        Algorithm::Fista => fista(&f, &y, &FistaConfig::default())?,
        Algorithm::AmpMmv => amp_mmv(&f, &y, args.alpha, args.iters)?,
        Algorithm::Lamp => {
            let path = args
                .model
                .as_ref()
                .ok_or_else(|| usage("--alg lamp requires --model <LMP1 file>"))?;
            let model = load_model(path, f.clone())?;
            let (x, states) = model.forward(&y)?;
            let residual = linalg::fro_norm(&(y.entries() - &f.apply(x.entries())));
            let support = linalg::nonzero_rows(x.entries());
            SolverResult {
                estimate: x,
                support,
                iterations: states.len(),
                residual_history: vec![residual],
                converged: residual.is_finite(),
                rank_deficient: false,
            }
        }
    };
    let reported = if args.no_postprocess {
        solved
    } else {
        let refit = prune_and_refit(&solved.estimate, &f, &y, args.s)?;
        SolverResult {
            estimate: refit.estimate,
            support: refit.support,
            iterations: solved.iterations,
            residual_history: refit.residual_history,
            converged: solved.converged,
            rank_deficient: refit.rank_deficient,
        }
    };
    let wall_time_ms = if args.timing {
        started.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    if let Some(out) = &args.out {
        write_cmpx(out, reported.estimate.entries())?;
    }
    println!("{SOLVER_CSV_HEADER}");
    println!("{}", reported.csv_row(alg.label(), args.s, os_label, wall_time_ms));
    Ok(())
}

fn run_train(args: TrainArgs) -> CliResult<()> {
    let f = build_sensing_matrix(args.os)?;
    let config = TrainConfig {
        t_layers: args.layers,
        n_pre: args.pre_epochs,
        n_post: args.post_epochs,
        batches_per_epoch: args.batches,
        batch_size: args.batch_size,
        gamma: args.gamma,
        lr: args.lr,
        s: args.s,
        p: args.p,
        snr_db: args.snr,
        seed: args.seed,
    };
    let outcome = train(f, &config)?;
    save_model(&args.out, &outcome.model)?;
    println!(
        "trained {}-layer model (gamma={}, {} batches) -> {}",
        args.layers,
        args.gamma,
        outcome.batch_losses.len(),
        args.out.display()
    );
    if let (Some(first), Some(last)) = (outcome.batch_losses.first(), outcome.batch_losses.last()) {
        println!("batch loss: first {first:.6e}, last {last:.6e}");
    }
    if let Some(path) = args.loss_out {
        let mut body = String::from("batch,loss\n");
        for (i, loss) in outcome.batch_losses.iter().enumerate() {
            body.push_str(&format!("{i},{loss}\n"));
        }
        std::fs::write(&path, body).map_err(Error::from)?;
        println!("wrote per-batch losses to {}", path.display());
    }
    Ok(())
}

fn parse_model_spec(spec: &str) -> CliResult<(String, PathBuf)> {
    let (os, path) = spec
        .split_once('=')
        .ok_or_else(|| usage(format!("--model expects os=path, got {spec:?}")))?;
    if os.parse::<usize>().is_err() {
        return Err(usage(format!("--model key must be an os value, got {os:?}")));
    }
    Ok((os.to_string(), PathBuf::from(path)))
}

fn eval(args: EvalArgs) -> CliResult<()> {
    let mut algorithms = Vec::new();
    for name in &args.alg {
        algorithms.push(Algorithm::from_str(name).map_err(|e| usage(e.to_string()))?);
    }
    let mut model_paths = BTreeMap::new();
    for spec in &args.models {
        let (os, path) = parse_model_spec(spec)?;
        model_paths.insert(os, path);
    }
    let config = ExperimentConfig {
        algorithms,
        os_values: args.os,
        s_values: args.s,
        gamma_values: Vec::new(),
        num_samples: args.samples,
        p: args.p,
        snr_db: args.snr,
        seed: args.seed,
        model_paths,
        postprocess: !args.no_postprocess,
        measure_time: args.timing,
        amp_iters: args.iters,
        amp_alpha: args.alpha,
    };
    let report = run_benchmark(&config)?;
    write_metrics_csv(&args.out, &report.rows)?;
    println!("wrote {} metric rows to {}", report.rows.len(), args.out.display());
    match args.summary_out {
        Some(path) => {
            write_summary_csv(&path, &report.summaries)?;
            println!("wrote {} summary rows to {}", report.summaries.len(), path.display());
        }
        None => {
            println!("{SUMMARY_CSV_HEADER}");
            for row in &report.summaries {
                println!("{}", row.csv_row());
            }
        }
    }
    Ok(())
}
