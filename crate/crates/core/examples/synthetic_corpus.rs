//! Generates the synthetic multi-register corpus and a ready-to-run
//! `experiment.toml` next to it.
//!
//! `cargo run --release --example synthetic_corpus -- [DIR] [--small]`

use std::path::PathBuf;

use macd::harness::synth::{generate, write_reference_setup, SynthSpec, DOMAINS};

const SEED: u64 = 7;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let spec = if args.iter().any(|a| a == "--small") { SynthSpec::small() } else { SynthSpec::default() };
    let dir = args
        .iter()
        .find(|a| !a.starts_with("--"))
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("macd-reference"));
    let cfg = write_reference_setup(&dir, &spec, SEED)?;
    let corpus = generate(&spec, SEED);

    let bytes = |docs: &[String]| docs.iter().map(|d| d.len()).sum::<usize>();
    println!("train    {:>5} docs {:>8} bytes", corpus.train.len(), bytes(&corpus.train));
    println!("informal {:>5} docs {:>8} bytes", corpus.informal.len(), bytes(&corpus.informal));
    for (name, docs) in DOMAINS.iter().zip(&corpus.held_out) {
        println!("{name:<8} {:>5} docs {:>8} bytes", docs.len(), bytes(docs));
    }
    println!("\nfirst training document:\n{}", corpus.train[0]);
    println!("\nfirst informal document:\n{}", corpus.informal[0]);
    println!("\nexperiment: {}", dir.join("experiment.toml").display());
    println!("models will go to {}", cfg.out_dir.join("models").display());
    Ok(())
}
