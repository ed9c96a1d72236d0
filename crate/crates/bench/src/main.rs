use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use opweight::fixed_point::BoundPolicy;
use opweight::primal_dual::CertificatePolicy;
use opweight::trace::Sampling;
use opweight::Error;
use opweight_bench::acceptance;
use opweight_bench::runner::{run_benchmark, write_outputs, BenchConfig, SolverKind, SolverParams};
use opweight_bench::ExperimentSpec;

#[derive(Parser)]
#[command(name = "bench", about = "Inverse-integration benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the selected solvers on one instance and write CSV traces.
    Run(RunArgs),
    /// Run the acceptance suite.
    Verify,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Signal-to-noise ratio in dB; `inf` for noiseless data.
    #[arg(long, default_value_t = 30.0, allow_negative_numbers = true)]
    snr_db: f64,
    #[arg(long, default_value_t = 3e-3)]
    mu: f64,
    #[arg(long, default_value_t = -80.0, allow_negative_numbers = true)]
    c: f64,
    #[arg(long, default_value_t = 52.0, allow_negative_numbers = true)]
    d: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 0.02)]
    spike_fraction: f64,
    /// Comma-separated subset of proposed, proposed_scalar, admm, condat.
    #[arg(long, default_value = "proposed,admm,condat", value_delimiter = ',')]
    solvers: Vec<String>,
    /// Per-solver wall-clock budget in seconds.
    #[arg(long, default_value_t = 60.0)]
    time_budget: f64,
    #[arg(long)]
    target_rmse: Option<f64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Run the solvers concurrently (timings are then not isolated).
    #[arg(long)]
    parallel: bool,
    /// `every` or `log:<rows per decade>`.
    #[arg(long, default_value = "every")]
    sampling: String,
    #[arg(long)]
    ssn_tau: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    ssn_gamma_factor: f64,
    /// enforce, shrink or waive.
    #[arg(long, default_value = "waive")]
    ssn_policy: String,
    #[arg(long)]
    ssn_enforce_certificate: bool,
    #[arg(long, default_value_t = 0.5)]
    scalar_tau: f64,
    #[arg(long, default_value_t = 0.05)]
    scalar_gamma: f64,
    #[arg(long, default_value_t = 0.99)]
    scalar_lambda: f64,
    /// ADMM penalty as a multiple of ‖H‖² (default 1/n).
    #[arg(long)]
    admm_rho_scale: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    condat_sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    condat_relaxation: f64,
    #[arg(long, default_value_t = 1e-14)]
    tol: f64,
}

fn parse_sampling(s: &str) -> Result<Sampling, Error> {
    if s == "every" {
        return Ok(Sampling::Every);
    }
    s.strip_prefix("log:")
        .and_then(|v| v.parse().ok())
        .map(|per_decade| Sampling::LogSpaced { per_decade })
        .ok_or_else(|| Error::InvalidParameter(format!("unknown sampling `{s}`")))
}

fn config(a: RunArgs) -> Result<(BenchConfig, PathBuf), Error> {
    let solvers = a.solvers.iter().map(|s| s.parse()).collect::<Result<Vec<SolverKind>, _>>()?;
    let spec = ExperimentSpec {
        n: a.n,
        snr_db: a.snr_db,
        mu: a.mu,
        c: a.c,
        d: a.d,
        seed: a.seed,
        spike_fraction: a.spike_fraction,
    };
    let params = SolverParams {
        ssn_tau: a.ssn_tau,
        ssn_gamma_factor: a.ssn_gamma_factor,
        ssn_policy: a.ssn_policy.parse::<BoundPolicy>()?,
        ssn_certificate: if a.ssn_enforce_certificate {
            CertificatePolicy::Enforce
        } else {
            CertificatePolicy::Waive
        },
        scalar_tau: a.scalar_tau,
        scalar_gamma: a.scalar_gamma,
        scalar_lambda: a.scalar_lambda,
        admm_rho_scale: a.admm_rho_scale,
        condat_sigma: a.condat_sigma,
        condat_relaxation: a.condat_relaxation,
        tol: a.tol,
        ..Default::default()
    };
    let cfg = BenchConfig {
        spec,
        solvers,
        time_budget_s: a.time_budget,
        target_rmse: a.target_rmse,
        params,
        parallel: a.parallel,
        sampling: parse_sampling(&a.sampling)?,
        record_iterates: false,
    };
    Ok((cfg, a.out))
}

fn run(a: RunArgs) -> ExitCode {
    let (cfg, out) = match config(a) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let result = match run_benchmark(&cfg) {
        Ok(r) => r,
        Err(e @ Error::Certificate(_)) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Err(e) = write_outputs(&result, &out) {
        eprintln!("error writing results to {}: {e}", out.display());
        return ExitCode::FAILURE;
    }
    for r in &result.runs {
        match &r.outcome {
            Ok(o) => {
                let last = o.trace.last();
                println!(
                    "{:<16} {:>10} iterations  {:>9.3} s  rmse {:.3e}  stop {:?}",
                    r.solver.name(),
                    o.trace.iterations,
                    o.trace.elapsed_s,
                    last.and_then(|l| l.rmse).unwrap_or(f64::NAN),
                    o.trace.stop_reason
                );
            }
            Err(e) => println!("{:<16} FAILED: {e}", r.solver.name()),
        }
    }
    if result.any_diverged() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if matches!(cli.command, Command::Verify) { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli.command {
        Command::Run(a) => run(a),
        Command::Verify => {
            let report = acceptance::run_all(|o| println!("{o}"));
            println!("{}", report.summary());
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
