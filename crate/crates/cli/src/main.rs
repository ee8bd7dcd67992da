use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lqconic::commands::{self, Analysis, CloudArgs, Outcome, RunArgs, INPUT_ERROR};

/// Finite-horizon linear-quadratic analysis with Riccati certificates.
///
/// Exit codes: 0 ok, 1 input or validation error, 2 infimum is minus
/// infinity, 3 not passive, 4 verification failed.
#[derive(Parser)]
#[command(name = "lqconic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic LQR from a known initial state.
    Lqr(Run),
    /// Stochastic LQR with initial covariance and process noise.
    Slqr(Run),
    /// Infimum of an indefinite quadratic form (iqc, bounded_real,
    /// positive_real documents).
    Iqc(Run),
    /// Finite-horizon L2-induced norm by bisection on the bounded-real test.
    Hinf(Run),
    /// Finite-horizon passivity test of z = Cx + Dv.
    Passivity(Run),
    /// DRE extremal and seeded DRI solutions as CSV, with a maximality verdict.
    DriCloud(Cloud),
    /// Re-check a result document against its problem on a refined grid.
    Verify(Verify),
}

#[derive(Args)]
struct Run {
    /// Problem document (JSON).
    input: PathBuf,
    /// Result document path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid steps [default: horizon.steps of the document, else 512].
    #[arg(long)]
    steps: Option<usize>,
    /// Numerical tolerance; for hinf also the bisection bracket width
    /// [default: options.tol of the document, else 1e-9].
    #[arg(long)]
    tol: Option<f64>,
    /// Horizon override.
    #[arg(long = "T", value_name = "T")]
    horizon: Option<f64>,
    /// Record wall-clock time in the result (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct Cloud {
    /// Problem document: a riccati variant or any LQ problem.
    input: PathBuf,
    /// Output directory for dre.csv, dri_NNN.csv and summary.json.
    #[arg(long)]
    csv_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Sample i uses seed + i [default: options.seed of the document, else 0].
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    switch_points: usize,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long = "T", value_name = "T")]
    horizon: Option<f64>,
    /// Loewner tolerance of the maximality verdict [default: 1e-7].
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct Verify {
    problem: PathBuf,
    result: PathBuf,
    #[arg(long)]
    tol: Option<f64>,
}

impl From<Run> for RunArgs {
    fn from(r: Run) -> Self {
        RunArgs {
            input: r.input,
            out: r.out,
            steps: r.steps,
            tol: r.tol,
            horizon: r.horizon,
            timing: r.timing,
        }
    }
}

fn run(cli: Cli) -> lqconic::Result<Outcome> {
    match cli.command {
        Command::Lqr(r) => commands::analyze(Analysis::Lqr, &r.into()),
        Command::Slqr(r) => commands::analyze(Analysis::Slqr, &r.into()),
        Command::Iqc(r) => commands::analyze(Analysis::Iqc, &r.into()),
        Command::Hinf(r) => commands::analyze(Analysis::Hinf, &r.into()),
        Command::Passivity(r) => commands::analyze(Analysis::Passivity, &r.into()),
        Command::DriCloud(c) => commands::dri_cloud(&CloudArgs {
            input: c.input,
            csv_dir: c.csv_dir,
            samples: c.samples,
            seed: c.seed,
            switch_points: c.switch_points,
            steps: c.steps,
            horizon: c.horizon,
            tol: c.tol,
        }),
        Command::Verify(v) => commands::verify(&v.problem, &v.result, v.tol),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(INPUT_ERROR)
        }
    }
}
