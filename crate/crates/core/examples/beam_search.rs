//! Beam search over contrastive step scores at several widths.

use macd::decoding::{decode, decode_beam, DecodeConfig};
use macd::harness::synth::{write_reference_setup, SynthSpec};
use macd::harness::{load_prompts, Zoo};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cfg = write_reference_setup(dir.path(), &SynthSpec::small(), 5)?;
    let (zoo, _) = Zoo::train(&cfg)?;
    let prompt = load_prompts(&cfg, &zoo.vocab, 1, 1)?.remove(0).1.remove(0);
    let strategy = cfg.decoding.strategy("macd-mean", cfg.seed)?;
    let dc = DecodeConfig::new(strategy, 24, Some(zoo.vocab.eos()));

    let plain = decode(zoo.expert.as_ref(), Some(&zoo.ensemble), &prompt, &dc)?;
    println!("decode        score {:>9.3} | {}", plain.trace.cumulative_score(), zoo.vocab.detokenize(&plain.tokens));
    for width in [1, 2, 5, 10] {
        let out = decode_beam(zoo.expert.as_ref(), Some(&zoo.ensemble), &prompt, &dc, width)?;
        println!(
            "beam width {width:<2} score {:>9.3} | {}",
            out.trace.cumulative_score(),
            zoo.vocab.detokenize(&out.tokens)
        );
    }
    Ok(())
}
