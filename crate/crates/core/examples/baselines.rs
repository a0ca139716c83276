//! Seeded sampling baselines next to greedy. Re-running with the same seed
//! reproduces every continuation.
//!
//! `cargo run --release --example baselines -- [SEED]`

use macd::decoding::{decode, DecodeConfig, Strategy};
use macd::harness::synth::{write_reference_setup, SynthSpec};
use macd::harness::{load_prompts, Zoo};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(0);
    let dir = tempfile::tempdir()?;
    let cfg = write_reference_setup(dir.path(), &SynthSpec::small(), 2)?;
    let (zoo, _) = Zoo::train(&cfg)?;
    let prompt = load_prompts(&cfg, &zoo.vocab, 1, 1)?.remove(2).1.remove(0);
    println!("prompt: {}\n", zoo.vocab.detokenize(&prompt[1..]));

    for s in [
        Strategy::Greedy,
        Strategy::TopKSample { k: 50, seed },
        Strategy::Nucleus { p: 0.95, seed },
        Strategy::Typical { tau_t: 0.95, seed },
    ] {
        let cfg = DecodeConfig::new(s, 40, Some(zoo.vocab.eos()));
        let a = decode(zoo.expert.as_ref(), None, &prompt, &cfg)?;
        let b = decode(zoo.expert.as_ref(), None, &prompt, &cfg)?;
        assert_eq!(a.tokens, b.tokens);
        let support: f64 = a.trace.steps.iter().map(|r| r.candidates.len() as f64).sum::<f64>() / a.trace.steps.len() as f64;
        println!("{:<8} mean support {support:>7.1} | {}", s.name(), zoo.vocab.detokenize(&a.tokens));
    }
    Ok(())
}
