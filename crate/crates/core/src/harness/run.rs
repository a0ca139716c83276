use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::zoo::{load_prompts, models_dir, pool, pooled_prompts, Zoo};
use super::HarnessError;
use crate::decoding::{decode, decode_beam, DecodeConfig, DecodeOutput, DecodeTrace, Strategy};
use crate::ensemble::{AmateurEnsemble, EnsembleMode};
use crate::lm::{TokenId, TokenSequence};
use crate::metrics::{
    continuation_nll_per_token, time_decode, MetricsReport, MetricsTable, TextMetrics, TimingSummary,
};

/// Fewest prompts per domain accepted by `evaluate`.
pub const MIN_EVAL_PROMPTS: usize = 50;
/// Fewest prompts accepted by `benchmark`.
pub const MIN_BENCHMARK_PROMPTS: usize = 10;

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports are serializable");
    s.push('\n');
    s
}

fn csv_string<T: Serialize>(rows: &[T]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(crate::metrics::MetricsError::from)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| crate::metrics::MetricsError::from(csv::Error::from(e.into_error())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Seed of one grid cell, so that every cell samples independently and
/// reproducibly regardless of scheduling.
fn cell_seed(base: u64, domain: usize, prompt: usize) -> u64 {
    base.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(((domain as u64) << 32) | prompt as u64)
}

fn decode_config(cfg: &ExperimentConfig, zoo: &Zoo, strategy: Strategy, max_new: usize, stop: bool) -> DecodeConfig {
    DecodeConfig {
        strategy,
        max_new_tokens: max_new,
        eos: stop.then(|| zoo.vocab.eos()),
        ensemble_mode: cfg.ensemble_mode,
        logp_floor: cfg.decoding.logp_floor,
    }
}

fn run_one(
    zoo: &Zoo,
    ensemble: &AmateurEnsemble,
    prompt: &[TokenId],
    dc: &DecodeConfig,
    beam_width: usize,
) -> Result<DecodeOutput, HarnessError> {
    let out = if beam_width > 1 && !dc.strategy.is_stochastic() {
        decode_beam(zoo.expert.as_ref(), Some(ensemble), prompt, dc, beam_width)?
    } else {
        decode(zoo.expert.as_ref(), Some(ensemble), prompt, dc)?
    };
    Ok(out)
}

/// What `train` wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub vocab_size: usize,
    pub train_tokens: usize,
    pub files: Vec<PathBuf>,
}

/// Trains the expert and every amateur and saves them with a manifest
/// under `<out_dir>/models`. Identical inputs give identical files.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainSummary, HarnessError> {
    let (zoo, train_tokens) = Zoo::train(cfg)?;
    let files = zoo.save(&models_dir(cfg))?;
    Ok(TrainSummary {
        vocab_size: zoo.vocab.len(),
        train_tokens,
        files,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub strategy: String,
    pub prompt_tokens: usize,
    pub text: String,
    pub tokens: TokenSequence,
    pub trace: DecodeTrace,
}

/// Decodes `prompt` with the first strategy of the grid. Out-of-vocabulary
/// words map to `<unk>`; an empty prompt still has the leading `<bos>`.
/// With `trace_path`, the full trace is written there as JSON.
pub fn cmd_decode(cfg: &ExperimentConfig, prompt: &str, trace_path: Option<&Path>) -> Result<DecodeResult, HarnessError> {
    let zoo = Zoo::load_for(cfg)?;
    let name = &cfg.decoding.strategies[0];
    let strategy = cfg.decoding.strategy(name, cfg.seed)?;
    let mut tokens = vec![zoo.vocab.bos()];
    tokens.extend(zoo.vocab.tokenize(prompt));
    let dc = decode_config(cfg, &zoo, strategy, cfg.max_new_tokens, cfg.stop_at_eos);
    let out = pool(cfg.workers)?.install(|| run_one(&zoo, &zoo.ensemble, &tokens, &dc, cfg.beam_width))?;
    if let Some(path) = trace_path {
        write(path, &to_json(&out.trace))?;
    }
    let visible: Vec<TokenId> = out.tokens.iter().copied().filter(|&t| t != zoo.vocab.eos()).collect();
    Ok(DecodeResult {
        strategy: name.clone(),
        prompt_tokens: tokens.len(),
        text: zoo.vocab.detokenize(&visible),
        tokens: out.tokens,
        trace: out.trace,
    })
}

/// One (domain, strategy, prompt) cell of an evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub domain: String,
    pub strategy: String,
    pub prompt_index: usize,
    pub prompt: String,
    pub continuation: String,
    pub tokens: TokenSequence,
    pub steps: usize,
    pub cumulative_score: f64,
    pub stopped_on_eos: bool,
    pub metrics: TextMetrics,
}

/// Every evaluated cell, in grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub cells: Vec<CellRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub table: MetricsTable,
    pub artifact: RunArtifact,
    pub files: Vec<PathBuf>,
}

/// Decodes a prompt and scores its continuation. Metrics use the
/// continuation without a trailing `<eos>`; NLL covers every generated
/// token.
fn score_cell(
    zoo: &Zoo,
    ensemble: &AmateurEnsemble,
    prompt: &[TokenId],
    dc: &DecodeConfig,
    beam_width: usize,
) -> Result<(DecodeOutput, TextMetrics), HarnessError> {
    let out = run_one(zoo, ensemble, prompt, dc, beam_width)?;
    let nll = continuation_nll_per_token(zoo.expert.as_ref(), prompt, &out.tokens)?;
    let eos = zoo.vocab.eos();
    let body = match out.tokens.split_last() {
        Some((&last, rest)) if last == eos => rest,
        _ => &out.tokens[..],
    };
    let metrics = TextMetrics::of(body, nll);
    Ok((out, metrics))
}

/// Runs every strategy of the grid on every prompt of every domain and
/// writes `evaluate.csv`, `evaluate.json` and `evaluate_cells.json`. Nothing
/// is written unless the whole grid succeeds. Timing columns stay blank so
/// that reruns are byte-identical; `benchmark` measures time.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<EvaluationReport, HarnessError> {
    if cfg.prompts_per_domain < MIN_EVAL_PROMPTS {
        return Err(HarnessError::Config(format!(
            "prompts_per_domain must be >= {MIN_EVAL_PROMPTS}, got {}",
            cfg.prompts_per_domain
        )));
    }
    let zoo = Zoo::load_for(cfg)?;
    let domains = load_prompts(cfg, &zoo.vocab, cfg.prompts_per_domain, MIN_EVAL_PROMPTS)?;
    let mut grid = Vec::new();
    for (di, (domain, prompts)) in domains.iter().enumerate() {
        for name in &cfg.decoding.strategies {
            for (pi, prompt) in prompts.iter().enumerate() {
                let strategy = cfg.decoding.strategy(name, cell_seed(cfg.seed, di, pi))?;
                grid.push((domain.as_str(), name.as_str(), pi, prompt, strategy));
            }
        }
    }
    let cells: Vec<CellRecord> = pool(cfg.workers)?.install(|| {
        grid.par_iter()
            .map(|&(domain, name, pi, prompt, strategy)| {
                let dc = decode_config(cfg, &zoo, strategy, cfg.max_new_tokens, cfg.stop_at_eos);
                let (out, metrics) = score_cell(&zoo, &zoo.ensemble, prompt, &dc, cfg.beam_width)?;
                let body: Vec<TokenId> = out.tokens.iter().copied().filter(|&t| t != zoo.vocab.eos()).collect();
                Ok(CellRecord {
                    domain: domain.to_string(),
                    strategy: name.to_string(),
                    prompt_index: pi,
                    prompt: zoo.vocab.detokenize(&prompt[1..]),
                    continuation: zoo.vocab.detokenize(&body),
                    stopped_on_eos: out.tokens.last() == Some(&zoo.vocab.eos()),
                    steps: out.trace.steps.len(),
                    cumulative_score: out.trace.cumulative_score(),
                    tokens: out.tokens,
                    metrics,
                })
            })
            .collect::<Result<_, HarnessError>>()
    })?;

    let mut rows = Vec::new();
    for (domain, _) in &domains {
        for name in &cfg.decoding.strategies {
            let per_prompt: Vec<TextMetrics> = cells
                .iter()
                .filter(|c| &c.domain == domain && &c.strategy == name)
                .map(|c| c.metrics)
                .collect();
            rows.extend(MetricsReport::aggregate(name, domain, &per_prompt));
        }
    }
    let table = MetricsTable::new(rows);
    let artifact = RunArtifact { cells };
    let files = vec![
        cfg.out_dir.join("evaluate.csv"),
        cfg.out_dir.join("evaluate.json"),
        cfg.out_dir.join("evaluate_cells.json"),
    ];
    write(&files[0], &table.to_csv()?)?;
    write(&files[1], &to_json(&table))?;
    write(&files[2], &to_json(&artifact))?;
    Ok(EvaluationReport { table, artifact, files })
}

/// One row of the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// `mean`, `consensus`, `no-penalty`, `cd` or `greedy`.
    pub variant: &'static str,
    pub k: Option<usize>,
    pub diversity: f64,
    pub distinct2: f64,
    pub distinct3: f64,
    pub distinct4: f64,
    pub repetition: f64,
    pub nll: f64,
}

impl AblationRow {
    fn new(variant: &'static str, k: Option<usize>, m: TextMetrics) -> Self {
        Self {
            variant,
            k,
            diversity: m.diversity,
            distinct2: m.distinct2,
            distinct3: m.distinct3,
            distinct4: m.distinct4,
            repetition: m.repetition,
            nll: m.nll,
        }
    }

    /// The metric columns, for row-to-row comparison.
    pub fn metrics(&self) -> [f64; 6] {
        [
            self.diversity,
            self.distinct2,
            self.distinct3,
            self.distinct4,
            self.repetition,
            self.nll,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub prompts: usize,
    pub rows: Vec<AblationRow>,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

impl AblationReport {
    pub fn to_csv(&self) -> Result<String, HarnessError> {
        csv_string(&self.rows)
    }

    pub fn row(&self, variant: &str, k: Option<usize>) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant && r.k == k)
    }
}

/// Ensemble-size sweep: for K = 1..=`ablation.max_k`, mean and consensus
/// scoring and the unpenalized (alpha = 0) variant, followed by CD and
/// greedy reference rows. Writes `ablate.csv` and `ablate.json`.
pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<AblationReport, HarnessError> {
    let zoo = Zoo::load_for(cfg)?;
    let max_k = cfg.ablation.max_k;
    if max_k == 0 || zoo.ensemble.k() < max_k {
        return Err(HarnessError::InsufficientAmateurs {
            need: max_k.max(1),
            found: zoo.ensemble.k(),
        });
    }
    let domains = load_prompts(cfg, &zoo.vocab, cfg.prompts_per_domain, 1)?;
    let prompts = pooled_prompts(&domains, cfg.ablation.prompts);
    if prompts.is_empty() {
        return Err(HarnessError::Config("ablation.prompts must be >= 1".into()));
    }
    let d = &cfg.decoding;
    let mut variants: Vec<(&'static str, Option<usize>, Strategy)> = Vec::new();
    for k in 1..=max_k {
        variants.push(("mean", Some(k), d.strategy("macd-mean", cfg.seed)?));
        variants.push(("consensus", Some(k), d.strategy("macd-consensus", cfg.seed)?));
        variants.push(("no-penalty", Some(k), d.strategy("macd-mean", cfg.seed)?.with_alpha(0.0)));
    }
    variants.push(("cd", None, d.strategy("cd", cfg.seed)?));
    variants.push(("greedy", None, Strategy::Greedy));

    let ensembles: Vec<AmateurEnsemble> = (1..=max_k).map(|k| zoo.ensemble.prefix(k)).collect::<Result<_, _>>()?;
    let grid: Vec<(usize, usize)> = (0..variants.len())
        .flat_map(|v| (0..prompts.len()).map(move |p| (v, p)))
        .collect();
    let metrics: Vec<TextMetrics> = pool(cfg.workers)?.install(|| {
        grid.par_iter()
            .map(|&(v, p)| {
                let (_, k, strategy) = variants[v];
                let ensemble = &ensembles[k.unwrap_or(1) - 1];
                let dc = decode_config(cfg, &zoo, strategy, cfg.max_new_tokens, cfg.stop_at_eos);
                score_cell(&zoo, ensemble, &prompts[p], &dc, cfg.beam_width).map(|(_, m)| m)
            })
            .collect::<Result<_, HarnessError>>()
    })?;
    let rows: Vec<AblationRow> = variants
        .iter()
        .zip(metrics.chunks(prompts.len()))
        .map(|(&(name, k, _), chunk)| {
            AblationRow::new(name, k, TextMetrics::mean(chunk).expect("at least one prompt"))
        })
        .collect();
    let files = vec![cfg.out_dir.join("ablate.csv"), cfg.out_dir.join("ablate.json")];
    let report = AblationReport {
        prompts: prompts.len(),
        rows,
        files: files.clone(),
    };
    write(&files[0], &report.to_csv()?)?;
    write(&files[1], &to_json(&report))?;
    Ok(report)
}

/// One timed configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub method: String,
    /// Ensemble size for K-sweep rows.
    pub k: Option<usize>,
    pub mode: EnsembleMode,
    pub prompts: usize,
    pub repetitions: usize,
    pub ms_per_prompt: f64,
    pub std_ms: f64,
    pub total_s: f64,
    /// `ms_per_prompt` over greedy's; larger is slower.
    pub rel_speed: f64,
    pub amateur_ms_per_prompt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub workers: usize,
    pub max_new_tokens: usize,
    pub rows: Vec<BenchmarkRow>,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

impl BenchmarkReport {
    pub fn to_csv(&self) -> Result<String, HarnessError> {
        csv_string(&self.rows)
    }
}

/// Times every strategy of the grid on fixed-length generations (no stop
/// at `<eos>`), greedy first as the reference, then sweeps MACD-mean over
/// K = 1..=`benchmark.max_k` in sequential and parallel ensemble mode.
/// All runs share one pool of `workers` threads. Writes `benchmark.csv`
/// and `benchmark.json`.
pub fn cmd_benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkReport, HarnessError> {
    let b = &cfg.benchmark;
    if b.prompts < MIN_BENCHMARK_PROMPTS {
        return Err(HarnessError::Config(format!(
            "benchmark.prompts must be >= {MIN_BENCHMARK_PROMPTS}, got {}",
            b.prompts
        )));
    }
    let zoo = Zoo::load_for(cfg)?;
    let domains = load_prompts(cfg, &zoo.vocab, cfg.prompts_per_domain, 1)?;
    let prompts = pooled_prompts(&domains, b.prompts);
    if prompts.len() < MIN_BENCHMARK_PROMPTS {
        return Err(HarnessError::InsufficientPrompts {
            domain: "all".into(),
            need: MIN_BENCHMARK_PROMPTS,
            found: prompts.len(),
        });
    }
    let time = |strategy: Strategy, ensemble: &AmateurEnsemble, mode: EnsembleMode| -> Result<TimingSummary, HarnessError> {
        let mut dc = decode_config(cfg, &zoo, strategy, b.max_new_tokens, false);
        dc.ensemble_mode = mode;
        let runner = |p: &[TokenId], c: &DecodeConfig| decode(zoo.expert.as_ref(), Some(ensemble), p, c);
        Ok(time_decode(runner, &prompts, &dc, b.repetitions)?)
    };
    let row = |method: &str, k: Option<usize>, mode: EnsembleMode, t: &TimingSummary, greedy_ms: f64| BenchmarkRow {
        method: method.to_string(),
        k,
        mode,
        prompts: t.prompts,
        repetitions: t.repetitions,
        ms_per_prompt: t.mean_ms,
        std_ms: t.std_ms,
        total_s: t.total_s,
        rel_speed: t.mean_ms / greedy_ms,
        amateur_ms_per_prompt: t.per_rep_amateur_ms.iter().sum::<f64>() / t.repetitions as f64,
    };

    let rows = pool(cfg.workers)?.install(|| -> Result<Vec<BenchmarkRow>, HarnessError> {
        let greedy = time(Strategy::Greedy, &zoo.ensemble, cfg.ensemble_mode)?;
        let mut rows = vec![row("greedy", None, cfg.ensemble_mode, &greedy, greedy.mean_ms)];
        for name in cfg.decoding.strategies.iter().filter(|n| *n != "greedy") {
            let s = cfg.decoding.strategy(name, cfg.seed)?;
            let t = time(s, &zoo.ensemble, cfg.ensemble_mode)?;
            rows.push(row(name, None, cfg.ensemble_mode, &t, greedy.mean_ms));
        }
        let mean = cfg.decoding.strategy("macd-mean", cfg.seed)?;
        for k in 1..=b.max_k.min(zoo.ensemble.k()) {
            let ens = zoo.ensemble.prefix(k)?;
            for mode in [EnsembleMode::Sequential, EnsembleMode::Parallel] {
                let t = time(mean, &ens, mode)?;
                rows.push(row("macd-mean", Some(k), mode, &t, greedy.mean_ms));
            }
        }
        Ok(rows)
    })?;
    let files = vec![cfg.out_dir.join("benchmark.csv"), cfg.out_dir.join("benchmark.json")];
    let report = BenchmarkReport {
        workers: cfg.workers,
        max_new_tokens: b.max_new_tokens,
        rows,
        files: files.clone(),
    };
    write(&files[0], &report.to_csv()?)?;
    write(&files[1], &to_json(&report))?;
    Ok(report)
}
