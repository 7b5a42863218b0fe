//! Deterministic adapter for tests: speaks the train/infer file protocol
//! without touching a model.
//!
//! Environment:
//! - `FINBENCH_MOCK_BEHAVIOR`: `echo_gold` (default), `majority_class` or `fixed_string:<text>`
//! - `FINBENCH_MOCK_ANSWERS`: gold answers for `echo_gold` [default: `answers.jsonl` next to the prompts]
//! - `FINBENCH_MOCK_CHECKPOINT_STEPS`: checkpoint interval [default: 100]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use finbench_core::runner::mock::{self, MockBehavior};

#[derive(Parser)]
#[command(name = "finbench-mock-adapter", about = "Deterministic stand-in training/inference adapter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Train {
        #[arg(long)]
        train_file: PathBuf,
        #[arg(long)]
        eval_file: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
    },
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        max_new_tokens: u32,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            train_file,
            eval_file,
            config,
            output_dir,
        } => mock::mock_train(&train_file, &eval_file, &config, &output_dir, mock::interval_from_env())
            .map(|ck| eprintln!("wrote {} checkpoints", ck.len())),
        Command::Infer {
            model,
            prompts,
            output,
            max_new_tokens: _,
        } => {
            let behavior: MockBehavior = match std::env::var(mock::ENV_BEHAVIOR) {
                Ok(v) => match v.parse() {
                    Ok(b) => b,
                    Err(e) => {
                        eprintln!("{e}");
                        return ExitCode::from(2);
                    }
                },
                Err(_) => MockBehavior::EchoGold,
            };
            let answers = mock::answers_path(&prompts, std::env::var_os(mock::ENV_ANSWERS).map(PathBuf::from));
            mock::mock_infer(&model, &prompts, &output, &behavior, &answers)
                .map(|c| eprintln!("wrote {} completions", c.len()))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mock adapter: {e}");
            ExitCode::FAILURE
        }
    }
}
