use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "annoloop", version, about = "Annotation auditing and refinement on synthetic CT phantoms")]
struct Cli {
    /// TOML config; missing keys fall back to the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for generation, training mixes and simulated reviewers.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "ANNOLOOP_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct OutArgs {
    #[arg(long, env = "ANNOLOOP_OUT_DIR")]
    out: PathBuf,

    /// Replace a nonempty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a phantom corpus with injected annotation noise.
    Generate {
        #[command(flatten)]
        out: OutArgs,
        /// Overrides `corpus.n_cases`.
        #[arg(long)]
        n_cases: Option<usize>,
    },
    /// Fit a model on the working labels and audit every structure.
    Audit {
        #[arg(long)]
        corpus: PathBuf,
        /// Use this model instead of fitting one.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run one audit-and-review pass and write the refined corpus.
    Refine {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Pick a tumor threshold on the gold split and cost the assisted workflow on the rest.
    Roc {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run the full refinement loop and persist every iteration.
    RunLoop {
        /// Start from this corpus instead of generating one.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Score working labels against gold.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        /// Also report surface Dice at this tolerance in mm.
        #[arg(long)]
        nsd_tolerance: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Answer open escalations of a finished run.
    Review {
        #[arg(long)]
        run: PathBuf,
        /// Iteration to review (default: the last one).
        #[arg(long)]
        iteration: Option<usize>,
        /// Read answers from a file instead of the terminal.
        #[arg(long)]
        answers: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { commands::EXIT_CONFIG } else { 0 });
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
