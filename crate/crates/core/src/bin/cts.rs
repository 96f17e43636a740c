use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clinical_ts::config::PipelineConfig;
use clinical_ts::error::{ConfigError, Error};
use clinical_ts::{Pipeline, StageName};

#[derive(Parser)]
#[command(name = "cts", version, about = "Clinical event timeline extraction")]
struct Cli {
    /// TOML pipeline config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding notes.{jsonl,csv} and queries.{jsonl,csv}.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Overrides the split and mock-embedding seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Chunk,
    Retrieve,
    Annotate,
    Clean,
    Bin,
    Pairs,
    Sequences,
    Split,
    Stats,
    /// Compare two Hadm_id,Event,Time tables.
    Concordance {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
    },
    /// chunk through stats, in order.
    All,
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.split.seed = seed;
        config.embedding.seed = seed;
    }
    let output = cli
        .output
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| ConfigError::new("--output", "no output directory given"))?;
    let mut pipeline = Pipeline::new(config, cli.input, output);
    let stage = match cli.command {
        Command::All => return pipeline.run_all(),
        Command::Concordance { reference, candidate } => {
            let report = pipeline.concordance(&reference, &candidate)?;
            print!("{report}");
            return Ok(());
        }
        Command::Chunk => StageName::Chunk,
        Command::Retrieve => StageName::Retrieve,
        Command::Annotate => StageName::Annotate,
        Command::Clean => StageName::Clean,
        Command::Bin => StageName::Bin,
        Command::Pairs => StageName::Pairs,
        Command::Sequences => StageName::Sequences,
        Command::Split => StageName::Split,
        Command::Stats => StageName::Stats,
    };
    pipeline.run(stage)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut body = serde_json::json!({
                "error": e.kind(),
                "exit_code": e.exit_code(),
                "message": e.to_string(),
            });
            if let Error::Config(c) = &e {
                body["field"] = c.field.clone().into();
            }
            eprintln!("{body}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
