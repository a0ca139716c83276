//! Trains the expert and amateur n-gram models, saves them with a manifest
//! and reloads them.
//!
//! `cargo run --release --example train_zoo`

use macd::harness::synth::{write_reference_setup, SynthSpec};
use macd::harness::{cmd_train, Zoo};
use macd::lm::{sequence_logprob, LanguageModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cfg = write_reference_setup(dir.path(), &SynthSpec::small(), 1)?;
    let summary = cmd_train(&cfg)?;
    println!("vocab {} tokens, {} training tokens", summary.vocab_size, summary.train_tokens);
    for f in &summary.files {
        println!("  wrote {}", f.file_name().unwrap().to_string_lossy());
    }

    let zoo = Zoo::load_for(&cfg)?;
    let probe = zoo.vocab.tokenize("the council said on monday that the city will review the plan .");
    let mut seq = vec![zoo.vocab.bos()];
    seq.extend(probe);
    println!("\nlog-probability of a held-out style sentence:");
    println!("  {:<16} {:>9.3}", "expert", sequence_logprob(zoo.expert.as_ref(), &seq)?);
    for m in zoo.ensemble.members() {
        let lp = sequence_logprob(m.model.as_ref(), &seq)?;
        println!("  {:<16} {lp:>9.3}  (tau {})", m.label, m.temperature);
    }

    let next = zoo.expert.next_logprobs(&seq[..3])?;
    let top: Vec<&str> = next.top_r(5).iter().map(|&t| zoo.vocab.token(t).unwrap()).collect();
    println!("\nexpert top-5 after `{}`: {top:?}", zoo.vocab.detokenize(&seq[1..3]));
    Ok(())
}
