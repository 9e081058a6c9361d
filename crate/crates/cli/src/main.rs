//! Command-line front end for the density-ratio estimation toolkit.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use commands::{
    run_bench_cond, run_bench_iter, run_check, run_fit, run_loocv, BenchCondOptions,
    BenchIterOptions, DataSource, FitOptions, Format, GenSpec, LoocvOptions,
};
use io::emit;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Ingest(#[from] io::IngestError),
    #[error(transparent)]
    Core(#[from] kulsif::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

fn parse_gen(raw: &str) -> Result<GenSpec, String> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err("expected d,n,m,mu".into());
    }
    let d = parts[0]
        .parse()
        .map_err(|_| "d must be a positive integer")?;
    let n = parts[1]
        .parse()
        .map_err(|_| "n must be a positive integer")?;
    let m = parts[2]
        .parse()
        .map_err(|_| "m must be a positive integer")?;
    let mu = parts[3].parse().map_err(|_| "mu must be a real number")?;
    Ok(GenSpec { d, n, m, mu })
}

fn parse_format(raw: &str) -> Result<Format, String> {
    match raw {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        other => Err(format!("unknown format '{other}' (use csv or json)")),
    }
}

/// Data source shared by fit and loocv: two CSV files or the synthetic
/// Gaussian-shift generator.
#[derive(Args, Debug)]
struct InputArgs {
    /// CSV of samples from the denominator distribution P (one row per point)
    #[arg(long, value_name = "PATH")]
    p_file: Option<PathBuf>,
    /// CSV of samples from the numerator distribution Q
    #[arg(long, value_name = "PATH")]
    q_file: Option<PathBuf>,
    /// Generate data instead: d,n,m,mu with X ~ N(0, I_d), Y ~ N(mu 1_d, I_d)
    #[arg(long, value_parser = parse_gen, value_name = "d,n,m,mu", conflicts_with_all = ["p_file", "q_file"])]
    gen: Option<GenSpec>,
    /// RNG seed for generated data
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Write the report here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Report format
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: Format,
}

#[derive(Parser, Debug)]
#[command(
    name = "kulsif",
    about = "Kernel density-ratio estimation: closed-form fits, analytic LOOCV model selection, and condition-number benchmarks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the kernel least-squares density-ratio model in closed form
    Fit {
        #[command(flatten)]
        input: InputArgs,
        /// Bandwidth: 'median' (pairwise-distance heuristic on X) or a number
        #[arg(long, default_value = "median")]
        sigma: String,
        /// Regularization: 'rule' (1/(n /\ m)^0.9) or a number
        #[arg(long, default_value = "rule")]
        lambda: String,
        /// Evaluate the fitted ratio on these points (default: the X sample)
        #[arg(long, value_name = "PATH")]
        eval_file: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Score a (sigma, lambda) grid by analytic leave-one-out cross-validation
    Loocv {
        #[command(flatten)]
        input: InputArgs,
        /// Comma-separated bandwidth grid
        #[arg(long, default_value = "1,2,4,8")]
        sigma_grid: String,
        /// Comma-separated regularization grid
        #[arg(long, default_value = "0.001,0.01,0.1,1")]
        lambda_grid: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Replicate the condition-number table over sample sizes
    BenchCond {
        /// Gaussian kernel bandwidth
        #[arg(long, default_value_t = 2.0)]
        sigma: f64,
        /// Comma-separated sample sizes
        #[arg(long, default_value = "20,50,100,200")]
        n_grid: String,
        /// Monte-Carlo runs per sample size
        #[arg(long, default_value_t = 100)]
        runs: usize,
        /// Mean shift of Q (enters the true-ratio Hessian column only)
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads for the benchmark runs (numeric results are
        /// independent of this)
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compare BFGS iteration counts across estimators (n = m)
    BenchIter {
        /// Sample size per distribution
        #[arg(long, default_value_t = 500)]
        n: usize,
        /// Number of seeded repetitions
        #[arg(long, default_value_t = 20)]
        runs: usize,
        /// Mean shift of Q
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads (wall times vary with load; numbers do not)
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the seeded invariant suite and exit non-zero on any failure
    Check {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Fit {
            input,
            sigma,
            lambda,
            eval_file,
            output,
        } => {
            let source = DataSource::resolve(input.p_file, input.q_file, input.gen)?;
            let report = run_fit(FitOptions {
                source,
                sigma,
                lambda,
                seed: input.seed,
                eval_file,
                format: output.format,
            })?;
            emit(output.out.as_deref(), &report)?;
            Ok(true)
        }
        Command::Loocv {
            input,
            sigma_grid,
            lambda_grid,
            output,
        } => {
            let source = DataSource::resolve(input.p_file, input.q_file, input.gen)?;
            let report = run_loocv(LoocvOptions {
                source,
                sigma_grid,
                lambda_grid,
                seed: input.seed,
                format: output.format,
            })?;
            emit(output.out.as_deref(), &report)?;
            Ok(true)
        }
        Command::BenchCond {
            sigma,
            n_grid,
            runs,
            mu,
            seed,
            threads,
            output,
        } => {
            let report = run_bench_cond(BenchCondOptions {
                sigma,
                n_grid,
                runs,
                mu,
                seed,
                threads,
                format: output.format,
            })?;
            emit(output.out.as_deref(), &report)?;
            Ok(true)
        }
        Command::BenchIter {
            n,
            runs,
            mu,
            seed,
            threads,
            output,
        } => {
            let report = run_bench_iter(BenchIterOptions {
                n,
                runs,
                mu,
                seed,
                threads,
                format: output.format,
            })?;
            emit(output.out.as_deref(), &report)?;
            Ok(true)
        }
        Command::Check { seed, output } => {
            let (report, ok) = run_check(seed)?;
            emit(output.out.as_deref(), &report)?;
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
