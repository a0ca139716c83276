//! Command-line front end. Data goes to stdout; failures print one JSON
//! object `{"error": code, "message": text}` to stderr and exit nonzero.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use macd::ensemble::EnsembleMode;
use macd::harness::{
    cmd_ablate, cmd_benchmark, cmd_decode, cmd_evaluate, cmd_train, parse_vote_rule, ExperimentConfig,
    HarnessError, Overrides,
};

#[derive(Parser)]
#[command(name = "macd", version, about = "Multi-amateur contrastive decoding over n-gram models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the expert and amateurs and write them with a manifest.
    Train(Common),
    /// Continue a prompt with the first strategy of the grid.
    Decode {
        #[command(flatten)]
        common: Common,
        /// Prompt text; whitespace-tokenized and lowercased.
        prompt: String,
    },
    /// Time every strategy and sweep the ensemble size.
    Benchmark(Common),
    /// Score every strategy on every prompt domain.
    Evaluate(Common),
    /// Ensemble-size and penalty ablation.
    Ablate(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the decode trace as JSON to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated strategy names.
    #[arg(long, value_delimiter = ',')]
    strategy: Option<Vec<String>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    /// Switch to the delta-margin filter with this margin (nats).
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
    /// `top-rank`, `top-rank:R` or `threshold:LOGP`.
    #[arg(long, allow_hyphen_values = true)]
    vote_rule: Option<String>,
    #[arg(long, value_parser = ["sequential", "parallel"])]
    ensemble_mode: Option<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        let overrides = Overrides {
            seed: self.seed,
            out: self.out.clone(),
            workers: self.workers,
            strategies: self.strategy.clone(),
            alpha: self.alpha,
            k: self.k,
            delta: self.delta,
            vote_rule: self.vote_rule.as_deref().map(parse_vote_rule).transpose()?,
            ensemble_mode: self
                .ensemble_mode
                .as_deref()
                .map(|m| m.parse::<EnsembleMode>().map_err(HarnessError::InvalidArgument))
                .transpose()?,
        };
        cfg.apply(&overrides)?;
        Ok(cfg)
    }
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports are serializable");
    s.push('\n');
    s
}

fn run(cli: Cli) -> Result<String, HarnessError> {
    match cli.command {
        Command::Train(c) => Ok(pretty(&cmd_train(&c.load()?)?)),
        Command::Decode { common, prompt } => {
            let out = cmd_decode(&common.load()?, &prompt, common.trace.as_deref())?;
            Ok(format!("{}\n", out.text))
        }
        Command::Benchmark(c) => cmd_benchmark(&c.load()?)?.to_csv(),
        Command::Evaluate(c) => Ok(cmd_evaluate(&c.load()?)?.table.to_csv()?),
        Command::Ablate(c) => cmd_ablate(&c.load()?)?.to_csv(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let msg = e.render().to_string();
            let line = serde_json::json!({ "error": "usage", "message": msg.trim() });
            eprintln!("{line}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
