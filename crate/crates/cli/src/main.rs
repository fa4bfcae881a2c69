mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spanlab::Error;

#[derive(Parser, Debug)]
#[command(name = "spanlab", version, about = "Toxic span detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normalize and tokenize raw posts (JSON lines or one post per line).
    Preprocess(Common),
    /// Corpus statistics as key=value lines.
    Stats(Common),
    /// Inter-annotator agreement and the disagreement report.
    Agreement(Common),
    /// Stratified train/dev/test split into the --output directory.
    Split(Common),
    /// Train one model and save the best dev checkpoint to --model.
    Train(Common),
    /// Grid search over learning rate, batch size and dropout.
    Grid(Common),
    /// Score predictions (--pred, or --model applied to --input) against gold.
    Eval(Common),
    /// Train per source domain and evaluate on every target domain.
    Crossdomain(Common),
    /// Label --input with --model.
    Predict(Common),
    /// Highlight rationales for each post.
    Explain(Common),
    /// Append label-preserving augmented copies of each post.
    Augment(Common),
    /// Generate a synthetic planted-lexicon corpus.
    Synth(Common),
    /// List every config-file key.
    Keys,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Ansi,
    Html,
    Tsv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossFlag {
    Crf,
    Weighted,
    Focal,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum EncoderFlag {
    Recurrent,
    Attention,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat `section.key = value` config file [default: none]
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Input file or directory [default: none]
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    /// Output file or directory [default: stdout]
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Model parameter file [default: none]
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Prediction corpus for eval [default: none]
    #[arg(long, value_name = "FILE")]
    pred: Option<PathBuf>,
    /// Output format for explain [default: tsv]
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Restrict decoding to valid BIO sequences [default: on]
    #[arg(long, value_enum)]
    constrain_bio: Option<Switch>,
    /// Training loss [default: crf]
    #[arg(long, value_enum)]
    loss: Option<LossFlag>,
    /// Encoder architecture [default: recurrent]
    #[arg(long, value_enum)]
    encoder: Option<EncoderFlag>,
    /// Extra config entry, repeatable, applied after --config [default: none]
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn run_config(&self) -> spanlab::Result<config::RunConfig> {
        let mut cfg = config::RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for entry in &self.set {
            let (k, v) = entry
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set {entry:?}: expected KEY=VALUE")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(s) = self.constrain_bio {
            cfg.constrain_bio = s == Switch::On;
        }
        if let Some(l) = self.loss {
            cfg.loss.kind = match l {
                LossFlag::Crf => spanlab::labeler::LossKind::CrfNll,
                LossFlag::Weighted => spanlab::labeler::LossKind::Weighted,
                LossFlag::Focal => spanlab::labeler::LossKind::Focal,
            };
        }
        if let Some(e) = self.encoder {
            cfg.encoder.kind = match e {
                EncoderFlag::Recurrent => spanlab::labeler::EncoderKind::Recurrent,
                EncoderFlag::Attention => spanlab::labeler::EncoderKind::Attention,
            };
        }
        cfg.finalize()?;
        Ok(cfg)
    }
}

/// 3 for a missing input file, 4 for configuration problems, 1 otherwise.
/// Usage errors exit with 2 through clap.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 3,
        Error::Config(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Keys => {
            for (key, help) in config::KEYS {
                println!("{key}\t{help}");
            }
            Ok(())
        }
        Command::Preprocess(c) => commands::run(commands::Sub::Preprocess, c),
        Command::Stats(c) => commands::run(commands::Sub::Stats, c),
        Command::Agreement(c) => commands::run(commands::Sub::Agreement, c),
        Command::Split(c) => commands::run(commands::Sub::Split, c),
        Command::Train(c) => commands::run(commands::Sub::Train, c),
        Command::Grid(c) => commands::run(commands::Sub::Grid, c),
        Command::Eval(c) => commands::run(commands::Sub::Eval, c),
        Command::Crossdomain(c) => commands::run(commands::Sub::Crossdomain, c),
        Command::Predict(c) => commands::run(commands::Sub::Predict, c),
        Command::Explain(c) => commands::run(commands::Sub::Explain, c),
        Command::Augment(c) => commands::run(commands::Sub::Augment, c),
        Command::Synth(c) => commands::run(commands::Sub::Synth, c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spanlab: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
