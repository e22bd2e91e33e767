//! `liftnmf` command line: factorize a CSV matrix, verify a factor pair,
//! or print the I-divergence between two matrices.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical
//! singularity.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use liftnmf_core::io::{parse_matrix, read_matrix, write_result, RunManifest};
use liftnmf_core::lifted::factorization_witness;
use liftnmf_core::{
    i_divergence, model_divergence, normalize_row_stochastic, run_with_threads,
    stationarity_residual, Error, FactorPair, InitStrategy, SolverConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_SINGULAR: i32 = 4;

/// Environment variable selecting how many threads dispatch restart runs.
pub const THREADS_ENV: &str = "LIFTNMF_THREADS";

#[derive(Parser)]
#[command(name = "liftnmf", version, about = "Nonnegative matrix factorization minimizing the I-divergence D(V‖WH)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Factorize a CSV matrix and write W.csv, H.csv, trace.jsonl, manifest.json.
    Factorize {
        /// Input matrix (CSV, optional header row).
        #[arg(long)]
        input: PathBuf,
        /// Inner dimension k of the factorization.
        #[arg(long)]
        rank: usize,
        #[arg(long, default_value_t = 1000)]
        max_iters: usize,
        /// Relative divergence-change stopping threshold.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Independently seeded solves; best final divergence wins.
        #[arg(long, default_value_t = 1)]
        restarts: usize,
        /// Run the lifted-space identity checks every iteration and record
        /// gain terms in the trace (observers only).
        #[arg(long)]
        oracle: bool,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Report divergence, stationarity residual and exactness gap of a factor pair.
    Verify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        w: PathBuf,
        #[arg(long)]
        h: PathBuf,
    },
    /// Print the I-divergence D(A‖B) between two CSV matrices.
    Divergence {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

/// Parse and dispatch; returns the process exit code instead of exiting, so
/// tests can drive the CLI in-process.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            // clap renders help to stdout and errors to stderr
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::ShapeMismatch { .. }
        | Error::RankOutOfRange { .. }
        | Error::InvalidConfig(_)
        | Error::TensorTooLarge { .. } => EXIT_USAGE,
        Error::Singularity { .. }
        | Error::DegenerateLatent { .. }
        | Error::InfiniteDivergence => EXIT_SINGULAR,
        _ => EXIT_DATA,
    }
}

fn dispatch(command: Command) -> Result<i32, Error> {
    match command {
        Command::Factorize {
            input,
            rank,
            max_iters,
            tol,
            seed,
            restarts,
            oracle,
            out,
        } => factorize(input, rank, max_iters, tol, seed, restarts, oracle, out),
        Command::Verify { input, w, h } => verify(input, w, h),
        Command::Divergence { a, b } => divergence(a, b),
    }
}

fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1)
}

#[allow(clippy::too_many_arguments)]
fn factorize(
    input: PathBuf,
    rank: usize,
    max_iters: usize,
    tol: f64,
    seed: u64,
    restarts: usize,
    oracle: bool,
    out: PathBuf,
) -> Result<i32, Error> {
    let bytes = fs::read(&input).map_err(|source| Error::Io {
        path: input.clone(),
        source,
    })?;
    let v = parse_matrix(&bytes)?;

    let mut cfg = SolverConfig::new(rank);
    cfg.max_iters = max_iters;
    cfg.rel_tol = tol;
    cfg.seed = seed;
    cfg.restarts = restarts;
    cfg.oracle_checks = oracle;
    cfg.init_strategy = InitStrategy::UniformRandom;

    let started = Instant::now();
    let result = run_with_threads(&v, &cfg, None, threads_from_env())?;
    let wall = started.elapsed();

    let manifest = RunManifest::new(&bytes, &cfg, &result, wall);
    let paths = write_result(&result, &manifest, &out)?;

    println!("final divergence  = {}", result.final_divergence);
    println!("iterations        = {}", result.iterations_run);
    println!("stop reason       = {:?}", result.stop_reason);
    if oracle {
        let worst = result
            .trace
            .records()
            .iter()
            .filter_map(|r| r.oracle.as_ref())
            .fold((0.0f64, 0.0f64, 0.0f64), |acc, o| {
                (
                    acc.0.max(o.gain_residual.abs()),
                    acc.1.max(o.equivalence_gap),
                    acc.2
                        .max(o.pyth_q_residual.abs())
                        .max(o.pyth_p_residual.abs()),
                )
            });
        println!("oracle max |gain residual|       = {:e}", worst.0);
        println!("oracle max equivalence gap       = {:e}", worst.1);
        println!("oracle max pythagorean residual  = {:e}", worst.2);
    }
    println!("wrote {}", paths.w.display());
    println!("wrote {}", paths.h.display());
    println!("wrote {}", paths.trace.display());
    println!("wrote {}", paths.manifest.display());
    Ok(EXIT_OK)
}

fn verify(input: PathBuf, w_path: PathBuf, h_path: PathBuf) -> Result<i32, Error> {
    let v = read_matrix(&input)?;
    let w = read_matrix(&w_path)?.into_array();
    let h = read_matrix(&h_path)?.into_array();

    let row_stochastic = h.rows().into_iter().all(|r| {
        let s: f64 = r.iter().sum();
        (s - 1.0).abs() <= liftnmf_core::matrix::ROW_SUM_TOL
    });
    let pair = if row_stochastic {
        FactorPair::new(w, h)?
    } else {
        println!("note: H is not row-stochastic; renormalizing (product unchanged)");
        normalize_row_stochastic(&w, &h)?
    };

    let d = model_divergence(&v, &pair)?;
    let witness = factorization_witness(&v, &pair)?;
    println!("divergence            = {d}");
    println!("exactness gap         = {:e}", witness.marginal_gap);
    println!("certified exact       = {}", witness.certified);

    if d.is_finite() {
        let residual = stationarity_residual(&v, &pair)?;
        println!("stationarity residual = {residual:e}");
        Ok(EXIT_OK)
    } else {
        println!("stationarity residual = undefined (model vanishes where data is positive)");
        Ok(EXIT_SINGULAR)
    }
}

fn divergence(a_path: PathBuf, b_path: PathBuf) -> Result<i32, Error> {
    let a = read_matrix(&a_path)?;
    let b = read_matrix(&b_path)?;
    let d = i_divergence(a.as_array(), b.as_array())?;
    println!("{d}");
    Ok(EXIT_OK)
}
