//! Ensemble-size and penalty ablation through the harness, as the CLI's
//! `ablate` subcommand runs it.

use macd::harness::synth::{write_reference_setup, SynthSpec};
use macd::harness::{cmd_ablate, cmd_train};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let mut cfg = write_reference_setup(dir.path(), &SynthSpec::small(), 3)?;
    cfg.max_new_tokens = 64;
    cfg.ablation.prompts = 30;
    cmd_train(&cfg)?;
    let report = cmd_ablate(&cfg)?;
    print!("{}", report.to_csv()?);

    let cd = report.row("cd", None).unwrap();
    let mean1 = report.row("mean", Some(1)).unwrap();
    println!("\nmean with one amateur reproduces cd: {}", cd.metrics() == mean1.metrics());
    Ok(())
}
