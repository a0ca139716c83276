//! Votes, consensus ratios and the three contrastive scores on a hand-built
//! five-token example, plus the joint plausibility filter.

use std::sync::Arc;

use macd::decoding::{
    cd_score, filter_joint, filter_topk, macd_consensus_score, macd_mean_score, FilterSpec,
};
use macd::ensemble::{
    consensus_ratio, mean_amateur_logp, AmateurEnsemble, EnsembleMode, VoteRule, DEFAULT_LOGP_FLOOR,
};
use macd::lm::{LanguageModel, LogProbDistribution, SyntheticTableModel, TokenId};

fn fixed(p: &[f64]) -> Arc<dyn LanguageModel> {
    Arc::new(SyntheticTableModel::new(0, LogProbDistribution::from_probs(p).unwrap()).unwrap())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let names = ["the", "a", "of", "dog", "zebra"];
    let expert = LogProbDistribution::from_probs(&[0.35, 0.25, 0.2, 0.15, 0.05])?;
    let ensemble = AmateurEnsemble::uniform(
        [
            fixed(&[0.6, 0.2, 0.1, 0.05, 0.05]),
            fixed(&[0.5, 0.1, 0.3, 0.05, 0.05]),
            fixed(&[0.2, 0.5, 0.1, 0.1, 0.1]),
        ],
        1.0,
    )?;
    let ctx = [TokenId(0)];
    let alpha = 0.5;
    let candidates = filter_topk(&expert, 4)?;
    let rule = VoteRule::TopRank { r: 2 };
    let (eval, dists) = ensemble.evaluate_with_distributions(&ctx, candidates.ids(), EnsembleMode::Sequential, Some(&rule))?;
    let ratios = consensus_ratio(&eval, &rule, Some(&dists))?;
    let means = mean_amateur_logp(&eval, DEFAULT_LOGP_FLOOR);

    println!("{:<6} {:>8} {:>8} {:>5} {:>8} {:>8} {:>8}", "token", "expert", "mean_a", "CR", "cd", "mean", "cons");
    for (m, &id) in candidates.ids().iter().enumerate() {
        let e = candidates.expert_logp()[m];
        let column: Vec<f64> = eval.per_member_logp.iter().map(|row| row[m]).collect();
        println!(
            "{:<6} {e:>8.3} {:>8.3} {:>5.2} {:>8.3} {:>8.3} {:>8.3}",
            names[id.index()],
            means[m],
            ratios[m],
            cd_score(e, column[0], alpha),
            macd_mean_score(e, &column, alpha),
            macd_consensus_score(e, ratios[m], alpha)?,
        );
    }

    let threshold = VoteRule::LogProbThreshold { tau_c: 0.15f64.ln() };
    let t_ratios = consensus_ratio(&eval, &threshold, None)?;
    println!("\nthreshold rule (p > 0.15) ratios: {t_ratios:?}");

    let spec = FilterSpec::Joint { delta: 1.0, cr_cap: 0.5 };
    println!("\n{spec:?}");
    let joint = filter_joint(&expert, 1.0, &ensemble, &ctx, &rule, 0.5, EnsembleMode::Sequential)?;
    let kept: Vec<&str> = joint.ids().iter().map(|t| names[t.index()]).collect();
    println!("joint filter keeps {kept:?}");
    Ok(())
}
