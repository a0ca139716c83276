//! Text-quality and timing measurements over generated token sequences.
//!
//! * `distinct_n`: unique n-grams over total n-grams.
//! * `diversity`: the product of distinct-2, distinct-3 and distinct-4.
//! * `repetition_rate`: the fraction of n-gram positions whose n-gram
//!   already occurred earlier in the same sequence.
//! * `expert_nll_per_token`: mean negative log-likelihood in nats.
//!
//! Reports serialize to JSON and to CSV with a fixed column order. The
//! `mauve` and `coherence` columns are always blank: both need pretrained
//! embedding models that are out of scope here.

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoding::{DecodeConfig, DecodeError, DecodeOutput};
use crate::lm::{conditional_logprob, LanguageModel, LmError, TokenId};

/// n-gram orders multiplied into the headline diversity column.
pub const DIVERSITY_ORDERS: [usize; 3] = [2, 3, 4];
/// Default n for `repetition_rate`.
pub const REPETITION_N: usize = 4;

/// CSV header, in output order.
pub const CSV_COLUMNS: [&str; 12] = [
    "method",
    "domain",
    "mauve",
    "diversity",
    "distinct2",
    "distinct3",
    "distinct4",
    "coherence",
    "repetition",
    "nll",
    "ms_per_prompt",
    "rel_speed",
];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least {need} tokens, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("no prompts to time")]
    NoPrompts,
    #[error("invalid timing request: {0}")]
    InvalidTiming(String),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Unique n-grams over total n-grams; 1.0 when `seq` has no n-grams.
///
/// # Panics
/// If `n == 0`.
pub fn distinct_n(seq: &[TokenId], n: usize) -> f64 {
    assert!(n >= 1, "distinct_n needs n >= 1");
    if seq.len() < n {
        return 1.0;
    }
    let grams = seq.windows(n);
    let total = grams.len();
    let unique: HashSet<&[TokenId]> = grams.collect();
    unique.len() as f64 / total as f64
}

/// `distinct_2 * distinct_3 * distinct_4`.
pub fn diversity(seq: &[TokenId]) -> f64 {
    DIVERSITY_ORDERS.iter().map(|&n| distinct_n(seq, n)).product()
}

/// Fraction of n-gram positions whose n-gram appeared at an earlier
/// position. With `window > 0` only the previous `window` positions count.
/// 0.0 when `seq` has no n-grams.
///
/// # Panics
/// If `n == 0`.
pub fn repetition_rate(seq: &[TokenId], n: usize, window: usize) -> f64 {
    assert!(n >= 1, "repetition_rate needs n >= 1");
    if seq.len() < n {
        return 0.0;
    }
    let grams: Vec<&[TokenId]> = seq.windows(n).collect();
    let repeated = if window == 0 {
        let mut seen = HashSet::with_capacity(grams.len());
        grams.iter().filter(|g| !seen.insert(**g)).count()
    } else {
        (0..grams.len())
            .filter(|&i| grams[i.saturating_sub(window)..i].contains(&grams[i]))
            .count()
    };
    repeated as f64 / grams.len() as f64
}

/// `-log P(seq[1..] | seq[0]) / (len - 1)`: nats per predicted token, the
/// first token serving as context.
pub fn expert_nll_per_token<M: LanguageModel + ?Sized>(expert: &M, seq: &[TokenId]) -> Result<f64, MetricsError> {
    if seq.len() < 2 {
        return Err(MetricsError::TooShort { need: 2, got: seq.len() });
    }
    continuation_nll_per_token(expert, &seq[..1], &seq[1..])
}

/// Mean NLL of `continuation` given `prompt`, in nats per token.
pub fn continuation_nll_per_token<M: LanguageModel + ?Sized>(
    expert: &M,
    prompt: &[TokenId],
    continuation: &[TokenId],
) -> Result<f64, MetricsError> {
    if continuation.is_empty() {
        return Err(MetricsError::TooShort { need: 1, got: 0 });
    }
    let lp = conditional_logprob(expert, prompt, continuation)?;
    Ok(-lp / continuation.len() as f64)
}

/// Per-sequence text metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextMetrics {
    pub distinct2: f64,
    pub distinct3: f64,
    pub distinct4: f64,
    pub diversity: f64,
    pub repetition: f64,
    pub nll: f64,
}

impl TextMetrics {
    /// Metrics of one generated continuation; `nll` is supplied by the
    /// caller because it needs the expert and the prompt.
    pub fn of(seq: &[TokenId], nll: f64) -> Self {
        let d = DIVERSITY_ORDERS.map(|n| distinct_n(seq, n));
        Self {
            distinct2: d[0],
            distinct3: d[1],
            distinct4: d[2],
            diversity: d.iter().product(),
            repetition: repetition_rate(seq, REPETITION_N, 0),
            nll,
        }
    }

    /// Field-wise arithmetic mean, summed in input order. `None` if empty.
    pub fn mean(items: &[TextMetrics]) -> Option<TextMetrics> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        let avg = |f: fn(&TextMetrics) -> f64| items.iter().map(f).sum::<f64>() / n;
        Some(TextMetrics {
            distinct2: avg(|m| m.distinct2),
            distinct3: avg(|m| m.distinct3),
            distinct4: avg(|m| m.distinct4),
            diversity: avg(|m| m.diversity),
            repetition: avg(|m| m.repetition),
            nll: avg(|m| m.nll),
        })
    }
}

/// Wall-clock summary of repeated decode runs over a prompt set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub prompts: usize,
    pub repetitions: usize,
    /// Mean over repetitions of the per-prompt average.
    pub mean_ms: f64,
    /// Sample standard deviation of the per-repetition averages; 0 for a
    /// single repetition.
    pub std_ms: f64,
    /// Mean seconds for one pass over all prompts.
    pub total_s: f64,
    /// Per-repetition ms per prompt.
    pub per_rep_ms: Vec<f64>,
    /// Per-repetition amateur-evaluation ms per prompt, read from traces.
    pub per_rep_amateur_ms: Vec<f64>,
}

impl TimingSummary {
    pub fn median_ms(&self) -> f64 {
        median(&self.per_rep_ms)
    }

    pub fn median_amateur_ms(&self) -> f64 {
        median(&self.per_rep_amateur_ms)
    }

    /// `self.mean_ms / baseline.mean_ms`; larger is slower.
    pub fn relative_to(&self, baseline: &TimingSummary) -> f64 {
        self.mean_ms / baseline.mean_ms
    }
}

/// Median of a non-empty slice; the mean of the two middle values for even
/// lengths.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Times `runner` over every prompt, `repetitions` times, after one
/// untimed warm-up pass over the first prompt. Only the runner call is
/// inside the measured region.
pub fn time_decode<F>(
    mut runner: F,
    prompts: &[Vec<TokenId>],
    config: &DecodeConfig,
    repetitions: usize,
) -> Result<TimingSummary, MetricsError>
where
    F: FnMut(&[TokenId], &DecodeConfig) -> Result<DecodeOutput, DecodeError>,
{
    if repetitions == 0 {
        return Err(MetricsError::InvalidTiming("repetitions must be >= 1".into()));
    }
    if prompts.is_empty() {
        return Err(MetricsError::NoPrompts);
    }
    if config.max_new_tokens == 0 {
        return Err(MetricsError::InvalidTiming("max_new_tokens must be >= 1".into()));
    }
    runner(&prompts[0], config)?;

    let n = prompts.len() as f64;
    let mut per_rep_ms = Vec::with_capacity(repetitions);
    let mut per_rep_amateur_ms = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let mut elapsed_ns = 0u128;
        let mut amateur_ns = 0u64;
        for p in prompts {
            let start = Instant::now();
            let out = runner(p, config)?;
            elapsed_ns += start.elapsed().as_nanos();
            amateur_ns += out.trace.amateur_ns();
        }
        per_rep_ms.push(elapsed_ns as f64 / 1e6 / n);
        per_rep_amateur_ms.push(amateur_ns as f64 / 1e6 / n);
    }
    let mean_ms = per_rep_ms.iter().sum::<f64>() / repetitions as f64;
    let std_ms = if repetitions > 1 {
        let ss: f64 = per_rep_ms.iter().map(|x| (x - mean_ms).powi(2)).sum();
        (ss / (repetitions - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(TimingSummary {
        prompts: prompts.len(),
        repetitions,
        mean_ms,
        std_ms,
        total_s: mean_ms * n / 1e3,
        per_rep_ms,
        per_rep_amateur_ms,
    })
}

/// Timing columns of a report row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingColumns {
    pub ms_per_prompt: f64,
    pub total_s: f64,
    pub rel_speed: f64,
}

/// One (method, domain) row: text metrics averaged over prompts, plus
/// optional timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub domain: String,
    pub prompts: usize,
    pub distinct_n: BTreeMap<usize, f64>,
    pub diversity: f64,
    pub repetition_rate: f64,
    pub expert_nll_per_token: f64,
    pub timing: Option<TimingColumns>,
}

impl MetricsReport {
    /// Averages per-prompt metrics. `None` if `per_prompt` is empty.
    pub fn aggregate(method: &str, domain: &str, per_prompt: &[TextMetrics]) -> Option<Self> {
        let m = TextMetrics::mean(per_prompt)?;
        Some(Self {
            method: method.to_string(),
            domain: domain.to_string(),
            prompts: per_prompt.len(),
            distinct_n: BTreeMap::from([(2, m.distinct2), (3, m.distinct3), (4, m.distinct4)]),
            diversity: m.diversity,
            repetition_rate: m.repetition,
            expert_nll_per_token: m.nll,
            timing: None,
        })
    }

    pub fn with_timing(mut self, timing: TimingColumns) -> Self {
        self.timing = Some(timing);
        self
    }

    fn csv_row(&self) -> CsvRow<'_> {
        CsvRow {
            method: &self.method,
            domain: &self.domain,
            mauve: None,
            diversity: self.diversity,
            distinct2: self.distinct_n.get(&2).copied().unwrap_or(1.0),
            distinct3: self.distinct_n.get(&3).copied().unwrap_or(1.0),
            distinct4: self.distinct_n.get(&4).copied().unwrap_or(1.0),
            coherence: None,
            repetition: self.repetition_rate,
            nll: self.expert_nll_per_token,
            ms_per_prompt: self.timing.map(|t| t.ms_per_prompt),
            rel_speed: self.timing.map(|t| t.rel_speed),
        }
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    method: &'a str,
    domain: &'a str,
    mauve: Option<f64>,
    diversity: f64,
    distinct2: f64,
    distinct3: f64,
    distinct4: f64,
    coherence: Option<f64>,
    repetition: f64,
    nll: f64,
    ms_per_prompt: Option<f64>,
    rel_speed: Option<f64>,
}

/// Self-describing definitions carried in every JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDefinitions {
    pub diversity: String,
    pub repetition: String,
    pub nll: String,
    pub rel_speed: String,
}

impl Default for MetricDefinitions {
    fn default() -> Self {
        Self {
            diversity: "distinct2 * distinct3 * distinct4 per continuation, averaged over prompts".into(),
            repetition: format!(
                "fraction of {REPETITION_N}-gram positions whose {REPETITION_N}-gram occurs earlier in the continuation"
            ),
            nll: "expert negative log-likelihood of the continuation given the prompt, nats per token".into(),
            rel_speed: "ms_per_prompt divided by greedy ms_per_prompt from the same session".into(),
        }
    }
}

/// An ordered set of report rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub definitions: MetricDefinitions,
    pub rows: Vec<MetricsReport>,
}

impl MetricsTable {
    pub fn new(rows: Vec<MetricsReport>) -> Self {
        Self {
            definitions: MetricDefinitions::default(),
            rows,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports are always serializable")
    }

    /// CSV in the fixed column order of [`CSV_COLUMNS`]; missing values are
    /// empty fields.
    pub fn to_csv(&self) -> Result<String, MetricsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            w.write_record(CSV_COLUMNS)?;
        }
        for r in &self.rows {
            w.serialize(r.csv_row())?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{LogProbDistribution, SyntheticTableModel};
    use proptest::prelude::*;

    fn ids(s: &str) -> Vec<TokenId> {
        s.bytes().filter(|b| !b.is_ascii_whitespace()).map(|b| TokenId((b - b'a') as u32)).collect()
    }

    #[test]
    fn distinct_hand_counts() {
        assert_eq!(distinct_n(&ids("a a a a"), 2), 1.0 / 3.0);
        assert_eq!(distinct_n(&ids("a b a b"), 2), 2.0 / 3.0);
        assert_eq!(distinct_n(&ids("a b c d"), 3), 1.0);
        assert_eq!(distinct_n(&ids("a"), 2), 1.0);
    }

    #[test]
    fn diversity_hand_counts() {
        let want = (1.0 / 4.0) * (1.0 / 3.0) * (1.0 / 2.0);
        assert!((diversity(&ids("a a a a a")) - want).abs() < 1e-12);
        assert_eq!(diversity(&ids("a")), 1.0);
        assert_eq!(diversity(&ids("a b c d e")), 1.0);
    }

    #[test]
    fn repetition_hand_counts() {
        assert_eq!(repetition_rate(&ids("a a a a a"), 1, 0), 0.8);
        assert_eq!(repetition_rate(&ids("a b c a b c"), 3, 0), 0.25);
        assert_eq!(repetition_rate(&ids("a b c d"), 2, 0), 0.0);
        let abcd8 = ids(&"abcd".repeat(8));
        // 29 four-grams, the first 4 are new
        assert_eq!(repetition_rate(&abcd8, 4, 0), 25.0 / 29.0);
    }

    #[test]
    fn repetition_window_limits_lookback() {
        // the second `a` is 3 positions after the first
        let s = ids("a b c a");
        assert_eq!(repetition_rate(&s, 1, 0), 0.25);
        assert_eq!(repetition_rate(&s, 1, 3), 0.25);
        assert_eq!(repetition_rate(&s, 1, 2), 0.0);
    }

    #[test]
    fn uniform_nll_is_log_vocab() {
        let m = SyntheticTableModel::new(0, LogProbDistribution::uniform(8)).unwrap();
        let nll = expert_nll_per_token(&m, &ids("a b c d e")).unwrap();
        assert!((nll - 8f64.ln()).abs() < 1e-12);
        assert!(matches!(expert_nll_per_token(&m, &ids("a")), Err(MetricsError::TooShort { .. })));
    }

    #[test]
    fn table_model_nll_is_hand_sum() {
        let m = SyntheticTableModel::new(1, LogProbDistribution::uniform(3))
            .unwrap()
            .with_entry(&[TokenId(0)], LogProbDistribution::from_probs(&[0.1, 0.6, 0.3]).unwrap())
            .unwrap()
            .with_entry(&[TokenId(1)], LogProbDistribution::from_probs(&[0.5, 0.25, 0.25]).unwrap())
            .unwrap();
        // a -> b (0.6) -> c (0.25)
        let want = -(0.6f64.ln() + 0.25f64.ln()) / 2.0;
        assert!((expert_nll_per_token(&m, &ids("a b c")).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn csv_has_fixed_columns_and_blanks() {
        let row = MetricsReport::aggregate("greedy", "story", &[TextMetrics::of(&ids("a b a b"), 1.5)]).unwrap();
        let csv = MetricsTable::new(vec![row]).to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields.len(), 12);
        assert_eq!(fields[0], "greedy");
        assert_eq!(fields[2], "");
        assert_eq!(fields[7], "");
        assert_eq!(fields[10], "");
        assert_eq!(fields[9], "1.5");
        assert_eq!(MetricsTable::new(vec![]).to_csv().unwrap().trim(), CSV_COLUMNS.join(","));
    }

    #[test]
    fn timing_self_ratio_and_preconditions() {
        use crate::decoding::{decode, Strategy};
        let m = SyntheticTableModel::new(0, LogProbDistribution::uniform(4)).unwrap();
        let cfg = DecodeConfig::new(Strategy::Greedy, 4, None);
        let prompts = vec![vec![TokenId(0)]; 3];
        let run = |p: &[TokenId], c: &DecodeConfig| decode(&m, None, p, c);
        let t = time_decode(run, &prompts, &cfg, 3).unwrap();
        assert_eq!(t.relative_to(&t), 1.0);
        assert_eq!(t.per_rep_ms.len(), 3);
        assert!(time_decode(run, &prompts, &cfg, 0).is_err());
        assert!(time_decode(run, &[], &cfg, 1).is_err());
        let mut zero = cfg;
        zero.max_new_tokens = 0;
        assert!(time_decode(run, &prompts, &zero, 1).is_err());
    }

    proptest! {
        #[test]
        fn metrics_in_unit_interval(seq in prop::collection::vec(0u32..5, 0..40)) {
            let s: Vec<TokenId> = seq.into_iter().map(TokenId).collect();
            let div = diversity(&s);
            let min = DIVERSITY_ORDERS.iter().map(|&n| distinct_n(&s, n)).fold(1.0, f64::min);
            prop_assert!((0.0..=1.0).contains(&div));
            prop_assert!(div <= min + 1e-15);
            prop_assert_eq!(div == 1.0, min == 1.0);
            let r = repetition_rate(&s, 4, 0);
            prop_assert!((0.0..=1.0).contains(&r));
        }

        #[test]
        fn metrics_invariant_to_relabeling(seq in prop::collection::vec(0u32..6, 0..40), shift in 1u32..6) {
            let s: Vec<TokenId> = seq.iter().map(|&t| TokenId(t)).collect();
            let relabeled: Vec<TokenId> = seq.iter().map(|&t| TokenId((t + shift) % 6)).collect();
            for n in 1..=4 {
                prop_assert_eq!(distinct_n(&s, n), distinct_n(&relabeled, n));
                prop_assert_eq!(repetition_rate(&s, n, 0), repetition_rate(&relabeled, n, 0));
            }
        }

        #[test]
        fn windowed_repetition_never_exceeds_unbounded(seq in prop::collection::vec(0u32..4, 0..30), w in 1usize..10) {
            let s: Vec<TokenId> = seq.into_iter().map(TokenId).collect();
            prop_assert!(repetition_rate(&s, 2, w) <= repetition_rate(&s, 2, 0));
        }
    }
}
