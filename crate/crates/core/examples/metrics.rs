//! Diversity, repetition and expert NLL on a few continuations, emitted as
//! the standard metrics table.

use macd::harness::synth::{write_reference_setup, SynthSpec};
use macd::harness::Zoo;
use macd::metrics::{
    continuation_nll_per_token, distinct_n, repetition_rate, MetricsReport, MetricsTable, TextMetrics,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cfg = write_reference_setup(dir.path(), &SynthSpec::small(), 9)?;
    let (zoo, _) = Zoo::train(&cfg)?;
    let prompt = vec![zoo.vocab.bos()];
    let samples = [
        ("looping", "the city said . the city said . the city said . the city said ."),
        ("varied", "officials in the city said on monday that the council will review the plan ."),
        ("shuffled", "plan review will council the that monday on said city the in officials ."),
    ];
    let mut rows = Vec::new();
    for (name, text) in samples {
        let seq = zoo.vocab.tokenize(text);
        let nll = continuation_nll_per_token(zoo.expert.as_ref(), &prompt, &seq)?;
        let m = TextMetrics::of(&seq, nll);
        println!(
            "{name:<9} d1 {:.3} d2 {:.3} div {:.4} rep4 {:.3} rep1(window 4) {:.3} nll {:.3}",
            distinct_n(&seq, 1),
            m.distinct2,
            m.diversity,
            m.repetition,
            repetition_rate(&seq, 1, 4),
            m.nll
        );
        rows.extend(MetricsReport::aggregate(name, "demo", &[m]));
    }
    println!("\n{}", MetricsTable::new(rows).to_csv()?);
    Ok(())
}
