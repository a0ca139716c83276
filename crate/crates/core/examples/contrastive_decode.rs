//! Greedy, single-amateur contrastive and both multi-amateur rules on the
//! same prompts.
//!
//! `cargo run --release --example contrastive_decode -- [ALPHA]`

use macd::decoding::{decode, DecodeConfig, FilterSpec, Strategy};
use macd::ensemble::VoteRule;
use macd::harness::synth::{write_reference_setup, SynthSpec};
use macd::harness::{load_prompts, Zoo};
use macd::metrics::{diversity, repetition_rate};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let alpha: f64 = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(0.1);
    let dir = tempfile::tempdir()?;
    let cfg = write_reference_setup(dir.path(), &SynthSpec::default(), 7)?;
    let (zoo, _) = Zoo::train(&cfg)?;
    let ensemble = zoo.ensemble.prefix(3)?;
    let labels: Vec<&str> = ensemble.members().iter().map(|m| m.label.as_str()).collect();
    println!("amateurs {labels:?}, alpha {alpha}\n");

    let filter = FilterSpec::TopK { k: 50 };
    let strategies = [
        Strategy::Greedy,
        Strategy::Cd { alpha, filter },
        Strategy::MacdMean { alpha, filter },
        Strategy::MacdConsensus {
            alpha,
            filter,
            vote_rule: VoteRule::TopRank { r: 10 },
        },
    ];
    let domains = load_prompts(&cfg, &zoo.vocab, 2, 1)?;
    for (domain, prompts) in &domains {
        let prompt = &prompts[0];
        println!("[{domain}] {}", zoo.vocab.detokenize(&prompt[1..]));
        for s in strategies {
            let out = decode(zoo.expert.as_ref(), Some(&ensemble), prompt, &DecodeConfig::new(s, 48, None))?;
            println!(
                "  {:<15} div {:.3} rep {:.3} | {}",
                s.name(),
                diversity(&out.tokens),
                repetition_rate(&out.tokens, 4, 0),
                zoo.vocab.detokenize(&out.tokens)
            );
        }
        println!();
    }
    Ok(())
}
