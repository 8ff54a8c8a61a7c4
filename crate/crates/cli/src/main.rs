use clap::{Parser, Subcommand};
use deul_cli::commands::{self, Context};
use deul_cli::config::RunConfig;
use deul_cli::output::resolve_out_dir;
use deul_cli::verify::VerifyOptions;
use deul_cli::{checks_exit_code, failure_summary, CliError, CliResult};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "deul", version, about = "Verification toolkit for damped wave equations and damped Euler systems")]
struct Cli {
    /// Configuration file (sections [law], [zones], [probes], [solver], [output]).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV/JSON/SVG files (overrides DEUL_OUT and the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Linear decay rates of radial data, fitted against the predicted exponents.
    Rates {
        /// Use the refined radial quadrature.
        #[arg(long)]
        refined: bool,
    },
    /// Zone atlas and elliptic growth-rate certification.
    Zones,
    /// Fundamental multipliers of both families at fixed (k, s).
    Multipliers {
        #[arg(long, default_value_t = 0.1)]
        k: f64,
        #[arg(long, default_value_t = 0.0)]
        s: f64,
        #[arg(long, default_value_t = 1000.0)]
        t_end: f64,
        #[arg(long, default_value_t = 41)]
        samples: usize,
    },
    /// Green matrix and its multiplier reconstruction at fixed (k, s).
    Green {
        #[arg(long, default_value_t = 0.1)]
        k: f64,
        #[arg(long, default_value_t = 0.0)]
        s: f64,
        #[arg(long, default_value_t = 1000.0)]
        t_end: f64,
        #[arg(long, default_value_t = 41)]
        samples: usize,
    },
    /// Elliptic-zone diagonalization checks.
    Diag,
    /// Multiplier envelope suite.
    Envelopes,
    /// Pseudo-spectral solve of the damped Euler system.
    Nonlinear {
        /// Also evolve the data under the exact linear flow and record the deviation.
        #[arg(long)]
        compare_linear: bool,
        /// Write the final state as a binary snapshot.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Run the acceptance suite.
    VerifyAll {
        /// Pinned desk-scale probe sets (skips grid-refinement reruns).
        #[arg(long)]
        quick: bool,
        /// Comma-separated criterion numbers.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u32>>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Rates { .. } => "rates",
            Command::Zones => "zones",
            Command::Multipliers { .. } => "multipliers",
            Command::Green { .. } => "green",
            Command::Diag => "diag",
            Command::Envelopes => "envelopes",
            Command::Nonlinear { .. } => "nonlinear",
            Command::VerifyAll { .. } => "verify-all",
        }
    }
}

fn execute(cli: &Cli) -> CliResult<Vec<deul_cli::Check>> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(format!("cannot configure thread pool: {e}")))?;
    }
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    config.validate()?;
    let env = std::env::var("DEUL_OUT").ok();
    let out_dir = resolve_out_dir(cli.out.as_deref(), env.as_deref(), config.out_dir.as_deref());
    let ctx = Context { config, out_dir };
    match &cli.command {
        Command::Rates { refined } => commands::rates(&ctx, *refined),
        Command::Zones => commands::zones(&ctx),
        Command::Multipliers { k, s, t_end, samples } => commands::multipliers(&ctx, *k, *s, *t_end, *samples),
        Command::Green { k, s, t_end, samples } => commands::green(&ctx, *k, *s, *t_end, *samples),
        Command::Diag => commands::diag(&ctx),
        Command::Envelopes => commands::envelopes(&ctx),
        Command::Nonlinear { compare_linear, snapshot } => commands::nonlinear(&ctx, *compare_linear, snapshot.as_deref()),
        Command::VerifyAll { quick, only } => commands::verify_all(&ctx, &VerifyOptions { quick: *quick, only: only.clone() }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match execute(&cli) {
        Ok(checks) => {
            if let Some(s) = failure_summary(name, &checks, None) {
                eprintln!("{s}");
            }
            ExitCode::from(checks_exit_code(&checks) as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(s) = failure_summary(name, &[], Some(&e)) {
                eprintln!("{s}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
