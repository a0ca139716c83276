use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::DOMAINS;
use super::HarnessError;
use crate::decoding::{FilterSpec, Strategy};
use crate::ensemble::{EnsembleMode, VoteRule, DEFAULT_LOGP_FLOOR};
use crate::lm::Smoothing;

/// Strategy names accepted in `decoding.strategies` and `--strategy`.
pub const STRATEGY_NAMES: [&str; 7] = ["greedy", "top-k", "nucleus", "typical", "cd", "macd-mean", "macd-consensus"];

/// A full experiment: corpora, model zoo, strategy grid and run sizes.
///
/// Stored as TOML. Relative paths are resolved against the config file's
/// directory by [`ExperimentConfig::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_prompt_len")]
    pub prompt_len: usize,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: usize,
    /// Prompts taken from each domain file by `evaluate`.
    #[serde(default = "default_prompts_per_domain")]
    pub prompts_per_domain: usize,
    /// Threads for grid cells and parallel ensemble evaluation.
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub ensemble_mode: EnsembleMode,
    /// Beam width for deterministic strategies; 1 decodes step by step.
    #[serde(default = "one")]
    pub beam_width: usize,
    #[serde(default = "yes")]
    pub stop_at_eos: bool,
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub expert: ModelSpec,
    #[serde(default = "default_amateurs", rename = "amateur")]
    pub amateurs: Vec<AmateurSpec>,
    #[serde(default)]
    pub decoding: DecodingConfig,
    #[serde(default)]
    pub benchmark: BenchmarkConfig,
    #[serde(default)]
    pub ablation: AblationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub train: PathBuf,
    #[serde(default = "one")]
    pub min_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub news: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wiki: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub story: Option<PathBuf>,
}

impl CorpusConfig {
    /// Configured prompt files, in report order.
    pub fn domains(&self) -> Vec<(&'static str, &Path)> {
        DOMAINS
            .iter()
            .zip([&self.news, &self.wiki, &self.story])
            .filter_map(|(d, p)| p.as_deref().map(|p| (*d, p)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub order: usize,
    pub smoothing: Smoothing,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            order: 4,
            smoothing: Smoothing::kneser_ney(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmateurSpec {
    pub label: String,
    pub order: usize,
    #[serde(default)]
    pub smoothing: Smoothing,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Train on this corpus instead of the main one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_corpus: Option<PathBuf>,
}

impl AmateurSpec {
    pub fn new(label: &str, order: usize) -> Self {
        Self {
            label: label.to_string(),
            order,
            smoothing: Smoothing::default(),
            temperature: default_temperature(),
            bias_corpus: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodingConfig {
    pub strategies: Vec<String>,
    pub alpha: f64,
    /// Penalty weight for consensus scoring; defaults to `alpha`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_consensus: Option<f64>,
    /// `k` for top-k sampling.
    pub top_k: usize,
    pub p: f64,
    pub tau_t: f64,
    /// Lower clamp for amateur log-probabilities.
    pub logp_floor: f64,
    pub filter: FilterSpec,
    pub vote_rule: VoteRule,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self {
            strategies: STRATEGY_NAMES.iter().map(|s| s.to_string()).collect(),
            alpha: 0.1,
            alpha_consensus: None,
            top_k: 50,
            p: 0.95,
            tau_t: 0.95,
            logp_floor: DEFAULT_LOGP_FLOOR,
            filter: FilterSpec::TopK { k: 50 },
            vote_rule: VoteRule::default(),
        }
    }
}

impl DecodingConfig {
    /// Builds the named strategy from the configured hyperparameters.
    /// Sampling strategies get `seed`.
    pub fn strategy(&self, name: &str, seed: u64) -> Result<Strategy, HarnessError> {
        let s = match name {
            "greedy" => Strategy::Greedy,
            "top-k" => Strategy::TopKSample { k: self.top_k, seed },
            "nucleus" => Strategy::Nucleus { p: self.p, seed },
            "typical" => Strategy::Typical { tau_t: self.tau_t, seed },
            "cd" => Strategy::Cd {
                alpha: self.alpha,
                filter: self.filter,
            },
            "macd-mean" => Strategy::MacdMean {
                alpha: self.alpha,
                filter: self.filter,
            },
            "macd-consensus" => Strategy::MacdConsensus {
                alpha: self.alpha_consensus.unwrap_or(self.alpha),
                filter: self.filter,
                vote_rule: self.vote_rule,
            },
            other => {
                return Err(HarnessError::Config(format!(
                    "unknown strategy `{other}`; expected one of {}",
                    STRATEGY_NAMES.join(", ")
                )))
            }
        };
        s.validate().map_err(|e| HarnessError::Config(format!("strategy `{name}`: {e}")))?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub prompts: usize,
    pub repetitions: usize,
    pub max_new_tokens: usize,
    /// Largest ensemble size in the K sweep.
    pub max_k: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            prompts: 10,
            repetitions: 5,
            max_new_tokens: 64,
            max_k: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Prompts drawn round-robin across domains.
    pub prompts: usize,
    pub max_k: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self { prompts: 50, max_k: 4 }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_prompt_len() -> usize {
    32
}
fn default_max_new_tokens() -> usize {
    256
}
fn default_prompts_per_domain() -> usize {
    50
}
fn default_temperature() -> f64 {
    0.5
}
fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_amateurs() -> Vec<AmateurSpec> {
    vec![
        AmateurSpec::new("unigram", 1),
        AmateurSpec::new("bigram", 2),
        AmateurSpec::new("trigram", 3),
    ]
}

impl ExperimentConfig {
    /// Defaults everywhere except the training corpus.
    pub fn new(train: impl Into<PathBuf>) -> Self {
        Self {
            seed: 0,
            out_dir: default_out_dir(),
            prompt_len: default_prompt_len(),
            max_new_tokens: default_max_new_tokens(),
            prompts_per_domain: default_prompts_per_domain(),
            workers: 1,
            ensemble_mode: EnsembleMode::Sequential,
            beam_width: 1,
            stop_at_eos: true,
            corpus: CorpusConfig {
                train: train.into(),
                min_count: 1,
                news: None,
                wiki: None,
                story: None,
            },
            expert: ModelSpec::default(),
            amateurs: default_amateurs(),
            decoding: DecodingConfig::default(),
            benchmark: BenchmarkConfig::default(),
            ablation: AblationConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Parses, resolves relative paths against the file's directory, and
    /// checks that every referenced corpus exists.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        fs::write(path, self.to_toml_string()).map_err(|e| HarnessError::io(path, e))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.corpus.train);
        for p in [&mut self.corpus.news, &mut self.corpus.wiki, &mut self.corpus.story]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        for a in &mut self.amateurs {
            if let Some(p) = a.bias_corpus.as_mut() {
                fix(p);
            }
        }
    }

    pub fn check_files(&self) -> Result<(), HarnessError> {
        let mut paths = vec![self.corpus.train.as_path()];
        paths.extend(self.corpus.domains().into_iter().map(|(_, p)| p));
        paths.extend(self.amateurs.iter().filter_map(|a| a.bias_corpus.as_deref()));
        for p in paths {
            if !p.is_file() {
                return Err(HarnessError::Config(format!("corpus file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.decoding.strategies.is_empty() {
            return bad("decoding.strategies is empty".into());
        }
        let mut seen = HashSet::new();
        for name in &self.decoding.strategies {
            if !seen.insert(name) {
                return bad(format!("strategy `{name}` listed twice"));
            }
            self.decoding.strategy(name, self.seed)?;
        }
        if self.prompt_len == 0 || self.max_new_tokens == 0 {
            return bad("prompt_len and max_new_tokens must be >= 1".into());
        }
        if self.workers == 0 || self.beam_width == 0 {
            return bad("workers and beam_width must be >= 1".into());
        }
        if self.expert.order == 0 || self.amateurs.iter().any(|a| a.order == 0) {
            return bad("model order must be >= 1".into());
        }
        if self.amateurs.iter().any(|a| !(a.temperature > 0.0 && a.temperature.is_finite())) {
            return bad("amateur temperature must be finite and > 0".into());
        }
        if self.benchmark.repetitions == 0 || self.benchmark.max_new_tokens == 0 {
            return bad("benchmark repetitions and max_new_tokens must be >= 1".into());
        }
        Ok(())
    }

    /// Applies command-line overrides; flags win over file values.
    pub fn apply(&mut self, o: &Overrides) -> Result<(), HarnessError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = &o.out {
            self.out_dir = p.clone();
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(names) = &o.strategies {
            self.decoding.strategies = names.clone();
        }
        if let Some(a) = o.alpha {
            self.decoding.alpha = a;
        }
        if let Some(k) = o.k {
            self.decoding.top_k = k;
            if let FilterSpec::TopK { .. } = self.decoding.filter {
                self.decoding.filter = FilterSpec::TopK { k };
            }
        }
        if let Some(delta) = o.delta {
            self.decoding.filter = match self.decoding.filter {
                FilterSpec::Joint { cr_cap, .. } => FilterSpec::Joint { delta, cr_cap },
                _ => FilterSpec::DeltaMargin { delta },
            };
        }
        if let Some(v) = o.vote_rule {
            self.decoding.vote_rule = v;
        }
        if let Some(m) = o.ensemble_mode {
            self.ensemble_mode = m;
        }
        self.validate()
    }
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub strategies: Option<Vec<String>>,
    pub alpha: Option<f64>,
    pub k: Option<usize>,
    pub delta: Option<f64>,
    pub vote_rule: Option<VoteRule>,
    pub ensemble_mode: Option<EnsembleMode>,
}

/// Parses `top-rank`, `top-rank:R` or `threshold:TAU`. The threshold has no
/// default and must be given.
pub fn parse_vote_rule(s: &str) -> Result<VoteRule, HarnessError> {
    let (kind, arg) = match s.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (s, None),
    };
    let bad = || HarnessError::InvalidArgument(format!("cannot parse vote rule `{s}`"));
    let rule = match (kind, arg) {
        ("top-rank", None) => VoteRule::default(),
        ("top-rank", Some(r)) => VoteRule::TopRank {
            r: r.parse().map_err(|_| bad())?,
        },
        ("threshold", Some(t)) => VoteRule::LogProbThreshold {
            tau_c: t.parse().map_err(|_| bad())?,
        },
        ("threshold", None) => {
            return Err(HarnessError::InvalidArgument(
                "threshold vote rule needs an explicit log-prob, e.g. threshold:-3.0".into(),
            ))
        }
        _ => return Err(bad()),
    };
    rule.validate()
        .map_err(|e| HarnessError::InvalidArgument(e.to_string()))?;
    Ok(rule)
}
