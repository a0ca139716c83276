//! Times decoding as the ensemble grows, sequential against parallel
//! amateur evaluation.
//!
//! `cargo run --release --example benchmark -- [WORKERS]`

use std::sync::Arc;

use macd::decoding::{decode, DecodeConfig};
use macd::ensemble::{AmateurEnsemble, EnsembleMode};
use macd::harness::synth::{write_reference_setup, SynthSpec};
use macd::harness::{load_prompts, Zoo};
use macd::lm::LanguageModel;
use macd::metrics::time_decode;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let workers: usize = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(4);
    let dir = tempfile::tempdir()?;
    let cfg = write_reference_setup(dir.path(), &SynthSpec::default(), 7)?;
    let (zoo, _) = Zoo::train(&cfg)?;
    let prompts: Vec<_> = load_prompts(&cfg, &zoo.vocab, 4, 1)?.into_iter().flat_map(|(_, p)| p).collect();
    let strategy = cfg.decoding.strategy("macd-mean", cfg.seed)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let bigram = zoo.amateurs[1].clone() as Arc<dyn LanguageModel>;

    let greedy = time_decode(
        |p, c| decode(zoo.expert.as_ref(), None, p, c),
        &prompts,
        &DecodeConfig::new(macd::decoding::Strategy::Greedy, 64, None),
        3,
    )?;
    println!("{prompts} prompts x 64 tokens, {workers} workers, greedy {:.2} ms/prompt", greedy.mean_ms, prompts = prompts.len());
    println!("{:>2} {:>10} {:>9} {:>10} {:>9}", "K", "mode", "ms", "amateur", "x greedy");
    for k in 1..=4 {
        let ens = AmateurEnsemble::uniform(std::iter::repeat(bigram.clone()).take(k), 0.5)?;
        for mode in [EnsembleMode::Sequential, EnsembleMode::Parallel] {
            let dc = DecodeConfig::new(strategy, 64, None).with_mode(mode);
            let t = pool.install(|| time_decode(|p, c| decode(zoo.expert.as_ref(), Some(&ens), p, c), &prompts, &dc, 3))?;
            println!(
                "{k:>2} {:>10} {:>9.2} {:>10.2} {:>9.2}",
                format!("{mode:?}").to_lowercase(),
                t.median_ms(),
                t.median_amateur_ms(),
                t.relative_to(&greedy)
            );
        }
    }
    Ok(())
}
