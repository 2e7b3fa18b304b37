//! `fedhar` command-line interface.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "fedhar", version, about = "Federated skeleton-based action recognition simulator")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Base seed; overrides the config file for `train`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output location (directory, or file for `prepare`/`synth`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Client training threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub parallel_clients: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn raw COCO-17 keypoint frames (JSONL) into 20-frame windows (JSONL).
    Prepare {
        /// Raw frame file.
        raw: PathBuf,
        #[arg(long, default_value_t = 640.0)]
        width: f64,
        #[arg(long, default_value_t = 480.0)]
        height: f64,
    },
    /// Generate synthetic raw keypoint frames.
    Synth {
        /// TOML file with synthetic-spec fields; defaults apply otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        subjects: Option<usize>,
        /// Also write the windows derived from the frames to this file.
        #[arg(long)]
        windows: Option<PathBuf>,
    },
    /// Run the experiment described by a config file.
    Train {
        config: PathBuf,
    },
    /// Evaluate a checkpoint on a window file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Window file to evaluate on (every window is used).
        #[arg(long)]
        data: PathBuf,
        /// Expected model kind; must match the checkpoint.
        #[arg(long)]
        model: Option<String>,
        /// Treat `data` as an unseen client and refuse it if the checkpoint
        /// was trained on these clients (comma separated).
        #[arg(long, value_delimiter = ',')]
        trained_on: Vec<String>,
    },
    /// Cross-client accuracy matrix of per-client checkpoints.
    Matrix {
        /// One checkpoint per client, in the order of `--clients`.
        #[arg(long, num_args = 1.., required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        clients: Vec<String>,
        /// Window file holding every listed client's windows.
        #[arg(long)]
        data: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare { raw, width, height } => commands::prepare(&cli.global, &raw, width, height),
        Command::Synth {
            spec,
            subjects,
            windows,
        } => commands::synth(&cli.global, spec.as_deref(), subjects, windows.as_deref()),
        Command::Train { config } => commands::train(&cli.global, &config),
        Command::Eval {
            checkpoint,
            data,
            model,
            trained_on,
        } => commands::eval(&cli.global, &checkpoint, &data, model.as_deref(), &trained_on),
        Command::Matrix {
            checkpoints,
            clients,
            data,
        } => commands::matrix(&cli.global, &checkpoints, &clients, &data),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
