use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stagedistil::pipeline::{default_root, ROOT_ENV};
use stagedistil::{ExperimentConfig, LabResult, Pipeline};

#[derive(Parser)]
#[command(name = "stagedistil", version, about = "Stage-wise distillation of a transformer tagger into a BiLSTM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set distil.strategy=D41`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Artifact root directory.
    #[arg(long, global = true, env = ROOT_ENV)]
    root: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate the synthetic multilingual corpus.
    SynthData,
    /// Build the WordPiece vocabulary from the corpus.
    BuildVocab,
    /// Fine-tune the teacher on the labeled split.
    TrainTeacher,
    /// Record teacher logits and representations on the transfer set.
    Trace,
    /// Train a student with the configured strategy.
    Distil,
    /// Score a trained student on the test split.
    Evaluate,
    /// Parameter counts and latency of teacher and students.
    Bench,
    /// Strategy × seed × transfer-size grid with a summary table.
    Sweep,
    /// Print the normalized configuration.
    ShowConfig,
}

fn run(cli: Cli) -> LabResult<()> {
    let config = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Command::ShowConfig = cli.command {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let root = cli.root.unwrap_or_else(default_root);
    let mut p = Pipeline::new(root, config);
    match cli.command {
        Command::SynthData => p.synth_data(),
        Command::BuildVocab => p.build_vocab().map(drop),
        Command::TrainTeacher => p.train_teacher().map(drop),
        Command::Trace => p.trace().map(drop),
        Command::Distil => p.distil().map(drop),
        Command::Evaluate => p.evaluate().map(|t| print!("{t}")),
        Command::Bench => p.bench().map(|t| print!("{t}")),
        Command::Sweep => p.sweep().map(|t| print!("{t}")),
        Command::ShowConfig => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
