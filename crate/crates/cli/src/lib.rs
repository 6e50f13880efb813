//! Batch front end for the `cultural-har` pipeline.
//!
//! Each subcommand reads files, writes its outputs plus a `run.json`
//! metadata file into the output directory, and maps failures onto
//! distinct exit codes (see [`exit_code`]).

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use cultural_har::error::ErrorKind;
use cultural_har::{Error, Result};

pub use commands::{
    cmd_classify, cmd_evaluate, cmd_extract, cmd_synth, cmd_train, ClassifyArgs, Context,
    EvaluateArgs, EvaluateOutcome, ExtractArgs, ExtractSummary, RegimeSeed, RunMetadata,
    SynthArgs, TrainArgs,
};
pub use config::CliConfig;

pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_PROVIDER: i32 = 5;
pub const EXIT_EVALUATION: i32 = 6;

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Config => EXIT_CONFIG,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Provider => EXIT_PROVIDER,
        ErrorKind::Evaluation => EXIT_EVALUATION,
    }
}

#[derive(Debug, Parser)]
#[command(name = "cultural-har", version, about = "Culture-aware activity recognition from image tags")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for partitioning (and for `synth`, generation).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `paths.out_dir` (default `out`).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tag every manifest record with the configured providers.
    Extract(ExtractArgs),
    /// Train a model on a manifest under one regime.
    Train(TrainArgs),
    /// Classify one image's tags with a trained model.
    Classify(ClassifyArgs),
    /// Run the subset/fold experiment for one or more regimes.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic dataset from a generator spec.
    Synth(SynthArgs),
}

impl Cli {
    pub fn context(&self) -> Result<Context> {
        let config = match &self.config {
            Some(path) => CliConfig::load(path)?,
            None => CliConfig::default(),
        };
        let out_dir = self
            .out_dir
            .clone()
            .or_else(|| config.paths.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        let mut ctx = Context::new(config, out_dir);
        ctx.config_path = self.config.clone();
        ctx.seed = self.seed;
        Ok(ctx)
    }
}

/// Runs a parsed command line, printing results to stdout.
pub fn run(cli: &Cli) -> Result<()> {
    let ctx = cli.context()?;
    match &cli.command {
        Command::Extract(args) => {
            let summary = cmd_extract(&ctx, args)?;
            print!("{}", summary.render());
        }
        Command::Train(args) => {
            let model = cmd_train(&ctx, args)?;
            println!(
                "trained {} model: {} classes, {} tags",
                args.regime,
                model.classes().len(),
                model.vocabulary().len()
            );
        }
        Command::Classify(args) => {
            let c = cmd_classify(&ctx, args)?;
            println!("{} ({:.4})", c.predicted_class, c.confidence);
            for (class, p) in c.classes.iter().zip(&c.posteriors) {
                println!("  {class}: {p:.6}");
            }
        }
        Command::Evaluate(args) => {
            cmd_evaluate(&ctx, args)?;
        }
        Command::Synth(args) => {
            let manifest = cmd_synth(&ctx, args)?;
            println!(
                "wrote {} images to {}",
                manifest.records().len(),
                ctx.out_dir.display()
            );
        }
    }
    Ok(())
}
