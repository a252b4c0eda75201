use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use commands::{Context, Failure};
use config::ExperimentConfig;

/// Klein-Gordon vector-field lab: solvers, audits and certificates.
#[derive(Parser, Debug)]
#[command(name = "kglab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; defaults to the config's `out` key, then `./out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for the spatial kernels.
    #[arg(long, global = true, env = "KGLAB_WORKERS")]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Lie closure, □₁ invariance, Jacobi and order-reduction certificates.
    VerifyAlgebra,
    /// Free or manufactured-source linear run.
    SolveLinear,
    /// Run with a γ^{11} bump perturbation.
    SolvePerturbed,
    /// Frozen-coefficient iteration for the quadratic nonlinearity.
    Iterate,
    /// Decay fit, interior certificate, residual and ray dumps.
    MeasureDecay,
    /// Energy, Hörmander and iteration ledgers.
    Audit,
    /// Aggregate a run directory into one summary.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::VerifyAlgebra => "verify-algebra",
            Command::SolveLinear => "solve-linear",
            Command::SolvePerturbed => "solve-perturbed",
            Command::Iterate => "iterate",
            Command::MeasureDecay => "measure-decay",
            Command::Audit => "audit",
            Command::Report => "report",
        }
    }
}

fn run(cli: &Cli) -> Result<String, Failure> {
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?,
        None => String::new(),
    };
    let cfg = ExperimentConfig::parse(&text).map_err(Failure::Config)?;
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Failure::Config("workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("worker pool: {e}")))?;
    }
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).map_err(|e| Failure::Config(format!("{}: {e}", out.display())))?;
    // report usually runs inside the directory it summarizes; keep that run's echo
    let echo = if matches!(cli.command, Command::Report) { "report_config.txt" } else { "config.txt" };
    fs::write(out.join(echo), &text)?;
    let ctx = Context { cfg, out };
    let verdict = match cli.command {
        Command::VerifyAlgebra => commands::verify_algebra(&ctx),
        Command::SolveLinear => commands::solve_linear(&ctx),
        Command::SolvePerturbed => commands::solve_perturbed_cmd(&ctx),
        Command::Iterate => commands::iterate(&ctx),
        Command::MeasureDecay => commands::measure_decay(&ctx),
        Command::Audit => commands::audit(&ctx),
        Command::Report => commands::report(&ctx),
    }?;
    fs::write(ctx.out.join(format!("{}.txt", cli.command.name())), &verdict)?;
    Ok(verdict)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(verdict) => {
            print!("{verdict}");
            ExitCode::SUCCESS
        }
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("run aborted: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Violation(verdict)) => {
            print!("{verdict}");
            eprintln!("audit violation");
            ExitCode::from(3)
        }
    }
}
