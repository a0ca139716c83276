//! Fixtures shared by the integration and acceptance targets.
#![allow(dead_code)]

pub mod oracle;

use std::path::Path;

use macd::harness::synth::{write_reference_setup, SynthSpec};
use macd::harness::{load_prompts, ExperimentConfig, Zoo};
use macd::lm::TokenSequence;
use tempfile::TempDir;

/// A trained reference zoo whose corpus lives in a temporary directory.
pub struct Reference {
    pub dir: TempDir,
    pub cfg: ExperimentConfig,
    pub zoo: Zoo,
}

impl Reference {
    pub fn build(spec: &SynthSpec, seed: u64) -> Reference {
        let dir = tempfile::tempdir().expect("tempdir");
        let cfg = write_reference_setup(dir.path(), spec, seed).expect("reference setup");
        let (zoo, _) = Zoo::train(&cfg).expect("train zoo");
        Reference { dir, cfg, zoo }
    }

    /// Up to `n` prompts taken round-robin across domains.
    pub fn prompts(&self, n: usize) -> Vec<TokenSequence> {
        let domains = load_prompts(&self.cfg, &self.zoo.vocab, usize::MAX, 1).expect("prompts");
        let longest = domains.iter().map(|(_, p)| p.len()).max().unwrap_or(0);
        (0..longest)
            .flat_map(|i| domains.iter().filter_map(move |(_, p)| p.get(i).cloned()))
            .take(n)
            .collect()
    }
}

/// Every regular file under `dir`, relative path and contents, sorted.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("read_dir") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).expect("read")));
            }
        }
    }
    out.sort();
    out
}
