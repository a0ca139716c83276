use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::corpus::{extract_prompts, read_documents, training_sequences};
use super::HarnessError;
use crate::ensemble::{AmateurEnsemble, EnsembleManifest, ManifestMember, Member};
use crate::lm::{NGramModel, Smoothing, TokenSequence, Vocabulary};

const MODELS_DIR: &str = "models";
const MANIFEST: &str = "manifest.toml";
const EXPERT_FILE: &str = "expert.ngram";

/// Expert plus ordered amateurs, all over one vocabulary.
#[derive(Debug, Clone)]
pub struct Zoo {
    pub vocab: Arc<Vocabulary>,
    pub expert: Arc<NGramModel>,
    /// The ensemble's members as concrete models, same order.
    pub amateurs: Vec<Arc<NGramModel>>,
    pub ensemble: AmateurEnsemble,
}

pub(crate) fn models_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join(MODELS_DIR)
}

fn amateur_file(i: usize, label: &str) -> String {
    let clean: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    format!("amateur-{i}-{clean}.ngram")
}

pub(crate) fn pool(workers: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::InvalidArgument(format!("cannot start {workers} workers: {e}")))
}

impl Zoo {
    /// Builds the shared vocabulary from the training corpus and every bias
    /// corpus, then trains the expert and each amateur. Amateurs with a bias
    /// corpus see only that corpus.
    pub fn train(cfg: &ExperimentConfig) -> Result<(Zoo, usize), HarnessError> {
        let train_docs = read_documents(&cfg.corpus.train)?;
        if train_docs.is_empty() {
            return Err(HarnessError::CorpusTooSmall(format!(
                "{} has no documents",
                cfg.corpus.train.display()
            )));
        }
        let bias_docs: Vec<Option<Vec<String>>> = cfg
            .amateurs
            .iter()
            .map(|a| a.bias_corpus.as_deref().map(read_documents).transpose())
            .collect::<Result<_, _>>()?;
        let all_docs = train_docs
            .iter()
            .chain(bias_docs.iter().flatten().flatten());
        let vocab = Arc::new(Vocabulary::build(all_docs, cfg.corpus.min_count)?);
        let train_seqs = training_sequences(&train_docs, &vocab);
        let train_tokens = train_seqs.iter().map(|s| s.len()).sum();

        let mut jobs: Vec<(usize, Smoothing, Option<&[String]>)> =
            vec![(cfg.expert.order, cfg.expert.smoothing, None)];
        for (a, bias) in cfg.amateurs.iter().zip(&bias_docs) {
            jobs.push((a.order, a.smoothing, bias.as_deref()));
        }
        let models: Vec<NGramModel> = pool(cfg.workers)?.install(|| {
            jobs.par_iter()
                .map(|&(order, smoothing, bias)| {
                    let seqs;
                    let corpus = match bias {
                        Some(docs) => {
                            seqs = training_sequences(docs, &vocab);
                            &seqs
                        }
                        None => &train_seqs,
                    };
                    NGramModel::train(corpus, order, smoothing, vocab.clone())
                })
                .collect::<Result<_, _>>()
        })?;
        let mut models = models.into_iter().map(Arc::new);
        let expert = models.next().expect("expert job");
        let zoo = Self::assemble(
            expert,
            models.collect(),
            cfg.amateurs.iter().map(|a| (a.temperature, a.label.clone())),
        )?;
        Ok((zoo, train_tokens))
    }

    /// Writes every model and the manifest under `dir`; returns the files
    /// written, manifest last.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let mut files = Vec::new();
        let expert_path = dir.join(EXPERT_FILE);
        self.expert.save(&expert_path)?;
        files.push(expert_path);
        let mut members = Vec::new();
        for (i, (m, model)) in self.ensemble.members().iter().zip(&self.amateurs).enumerate() {
            let name = amateur_file(i, &m.label);
            model.save(dir.join(&name))?;
            files.push(dir.join(&name));
            members.push(ManifestMember {
                path: name.into(),
                temperature: m.temperature,
                label: Some(m.label.clone()),
            });
        }
        let manifest = EnsembleManifest {
            expert: Some(EXPERT_FILE.into()),
            members,
        };
        let manifest_path = dir.join(MANIFEST);
        manifest.save(&manifest_path)?;
        files.push(manifest_path);
        Ok(files)
    }

    /// Loads a zoo written by [`Zoo::save`].
    pub fn load(dir: &Path) -> Result<Zoo, HarnessError> {
        let manifest_path = dir.join(MANIFEST);
        if !manifest_path.is_file() {
            return Err(HarnessError::ModelNotFound(manifest_path));
        }
        let manifest = EnsembleManifest::load(&manifest_path)?;
        let expert_rel = manifest.expert.clone().unwrap_or_else(|| EXPERT_FILE.into());
        for p in std::iter::once(&expert_rel).chain(manifest.members.iter().map(|m| &m.path)) {
            if !dir.join(p).is_file() {
                return Err(HarnessError::ModelNotFound(dir.join(p)));
            }
        }
        let expert = Arc::new(NGramModel::load(dir.join(&expert_rel))?);
        let amateurs = manifest
            .members
            .iter()
            .map(|m| NGramModel::load(dir.join(&m.path)).map(Arc::new))
            .collect::<Result<Vec<_>, _>>()?;
        Self::assemble(
            expert,
            amateurs,
            manifest
                .members
                .iter()
                .enumerate()
                .map(|(i, m)| (m.temperature, m.label.clone().unwrap_or_else(|| format!("amateur-{i}")))),
        )
    }

    pub fn load_for(cfg: &ExperimentConfig) -> Result<Zoo, HarnessError> {
        Self::load(&models_dir(cfg))
    }

    fn assemble(
        expert: Arc<NGramModel>,
        amateurs: Vec<Arc<NGramModel>>,
        temps_labels: impl IntoIterator<Item = (f64, String)>,
    ) -> Result<Zoo, HarnessError> {
        let members = amateurs
            .iter()
            .zip(temps_labels)
            .map(|(m, (temperature, label))| Member {
                model: m.clone(),
                temperature,
                label,
            })
            .collect();
        let ensemble = AmateurEnsemble::new(members)?;
        ensemble.check_expert(expert.as_ref())?;
        Ok(Zoo {
            vocab: expert.vocab().clone(),
            expert,
            amateurs,
            ensemble,
        })
    }
}

/// Prompts of every configured domain, at most `per_domain` each.
/// Fails if any domain yields fewer than `need`.
pub fn load_prompts(
    cfg: &ExperimentConfig,
    vocab: &Vocabulary,
    per_domain: usize,
    need: usize,
) -> Result<Vec<(String, Vec<TokenSequence>)>, HarnessError> {
    let domains = cfg.corpus.domains();
    if domains.is_empty() {
        return Err(HarnessError::Config(
            "no prompt files configured; set corpus.news, corpus.wiki or corpus.story".into(),
        ));
    }
    domains
        .into_iter()
        .map(|(name, path)| {
            let docs = read_documents(path)?;
            let mut prompts = extract_prompts(&docs, vocab, cfg.prompt_len);
            if prompts.len() < need {
                return Err(HarnessError::InsufficientPrompts {
                    domain: name.to_string(),
                    need,
                    found: prompts.len(),
                });
            }
            prompts.truncate(per_domain);
            Ok((name.to_string(), prompts))
        })
        .collect()
}

/// Interleaves domains round-robin and keeps the first `n` prompts.
pub(crate) fn pooled_prompts(domains: &[(String, Vec<TokenSequence>)], n: usize) -> Vec<TokenSequence> {
    let longest = domains.iter().map(|(_, p)| p.len()).max().unwrap_or(0);
    (0..longest)
        .flat_map(|i| domains.iter().filter_map(move |(_, p)| p.get(i).cloned()))
        .take(n)
        .collect()
}
