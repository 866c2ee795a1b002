use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedpart_cli::{cmd_compare, cmd_gen_data, cmd_gradcheck, cmd_run, CliError, GradcheckArgs, Overrides};
use fedpart_core::Strategy;

/// Federated learning simulator with partial parameter sharing.
///
/// Exit codes: 0 success, 1 configuration error, 2 runtime error.
/// FEDPART_THREADS sets the worker count; results do not depend on it.
#[derive(Parser)]
#[command(name = "fedpart", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and print a JSON summary.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run several strategies on identical shards, seeds and client draws.
    Compare {
        config: PathBuf,
        /// Comma-separated list, e.g. FED_AVG,HDAFL.
        #[arg(long, value_delimiter = ',', default_value = "FED_AVG,HDAFL")]
        strategies: Vec<Strategy>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Check analytic gradients against central differences.
    Gradcheck {
        /// Compact layer list, e.g. dense:4:8,relu,dense:8:3.
        #[arg(long)]
        layers: String,
        /// Per-sample input shape, e.g. 4 or 2x10.
        #[arg(long)]
        input: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        batch_size: usize,
        #[arg(long, hide = true)]
        corrupt_grad: Option<usize>,
    },
    /// Write the configured dataset as CSV.
    GenData {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_data: Option<u64>,
    },
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    seed_init: Option<u64>,
    #[arg(long)]
    seed_selection: Option<u64>,
    #[arg(long)]
    seed_train: Option<u64>,
    #[arg(long)]
    seed_data: Option<u64>,
    /// Output CSV path (relative to the working directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl From<OverrideArgs> for Overrides {
    fn from(a: OverrideArgs) -> Self {
        Overrides {
            seed_init: a.seed_init,
            seed_selection: a.seed_selection,
            seed_train: a.seed_train,
            seed_data: a.seed_data,
            out: a.out,
        }
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, overrides } => {
            println!("{}", cmd_run(&config, &overrides.into())?);
        }
        Command::Compare {
            config,
            strategies,
            overrides,
        } => {
            println!("{}", cmd_compare(&config, &strategies, &overrides.into())?);
        }
        Command::Gradcheck {
            layers,
            input,
            seed,
            batch_size,
            corrupt_grad,
        } => {
            let outcome = cmd_gradcheck(&GradcheckArgs {
                layers,
                input,
                seed,
                batch_size,
                corrupt_index: corrupt_grad,
            })?;
            println!("{}", serde_json::to_string(&outcome).expect("outcome serializes"));
            if !outcome.passed {
                return Err(CliError::Runtime(format!(
                    "gradient check failed: max relative error {:e} at parameter index {}",
                    outcome.max_rel_error, outcome.worst_index
                )));
            }
        }
        Command::GenData { config, out, seed_data } => {
            let overrides = Overrides {
                seed_data,
                ..Overrides::default()
            };
            let rows = cmd_gen_data(&config, &out, &overrides)?;
            log::info!("wrote {rows} rows to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors count as configuration errors (exit 1), not clap's 2.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
