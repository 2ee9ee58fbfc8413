use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use parabolica::run::{error_kind, exit_code, run, write_outputs, RunConfig, Scheme};
use parabolica::Error;

#[derive(Parser)]
#[command(
    name = "parabolica",
    version,
    about = "Monte Carlo solvers for parabolic PDEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate forward paths.
    Simulate(Common),
    /// Feynman–Kac estimate for a linear problem.
    SolveLinear(Common),
    /// Backward scheme for a semilinear problem.
    SolveSemilinear(Common),
    /// Backward scheme with Hessian estimation for a fully non-linear problem.
    #[command(name = "solve-2bsde")]
    Solve2bsde(Common),
    /// Solve a control problem and extract the feedback control.
    SolveHjb(Common),
    /// Run the oracle checks for a problem.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "PARABOLICA_THREADS")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn fail(err: &Error) -> ExitCode {
    let code = exit_code(err);
    eprintln!(
        "{}",
        json!({ "error": error_kind(err), "exit_code": code, "message": err.to_string() })
    );
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (scheme, common) = match cli.command {
        Command::Simulate(c) => (Scheme::Simulate, c),
        Command::SolveLinear(c) => (Scheme::Linear, c),
        Command::SolveSemilinear(c) => (Scheme::Semilinear, c),
        Command::Solve2bsde(c) => (Scheme::Full2bsde, c),
        Command::SolveHjb(c) => (Scheme::Hjb, c),
        Command::Verify(c) => (Scheme::Verify, c),
    };
    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => {
            return fail(&Error::InvalidConfig(format!(
                "{}: {e}",
                common.config.display()
            )))
        }
    };
    let mut config = match RunConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let threads = common.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => return fail(&Error::InvalidConfig(e.to_string())),
    };
    let started = Instant::now();
    let output = match pool.install(|| run(&config, scheme)) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    let host = json!({
        "runtime_seconds": started.elapsed().as_secs_f64(),
        "threads": pool.current_num_threads(),
    });
    if let Err(e) = write_outputs(&common.out, &output, host) {
        return fail(&e);
    }
    if output.checks_failed {
        eprintln!(
            "{}",
            json!({ "error": "verify_check_failed", "exit_code": 3, "message": "one or more checks failed" })
        );
        return ExitCode::from(3);
    }
    ExitCode::SUCCESS
}
