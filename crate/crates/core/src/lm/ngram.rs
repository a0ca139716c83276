use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{validate_ids, LanguageModel, LmError, LogProbDistribution, TokenId, Vocabulary};

pub const NGRAM_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "macd-ngram";

/// Count smoothing for an [`NGramModel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Smoothing {
    /// `(c(h,w) + lambda) / (c(h) + lambda * |V|)` at the longest seen context.
    Additive { lambda: f64 },
    /// Interpolated Kneser-Ney with a single absolute discount in `(0, 1]`.
    KneserNey { discount: f64 },
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::Additive { lambda: 0.01 }
    }
}

impl Smoothing {
    pub fn kneser_ney() -> Self {
        Smoothing::KneserNey { discount: 0.75 }
    }

    fn validate(&self) -> Result<(), LmError> {
        match *self {
            Smoothing::Additive { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => Err(
                LmError::InvalidSmoothing(format!("additive lambda must be finite and >= 0, got {lambda}")),
            ),
            Smoothing::KneserNey { discount } if !(discount > 0.0 && discount <= 1.0) => Err(
                LmError::InvalidSmoothing(format!("kneser-ney discount must be in (0, 1], got {discount}")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Followers {
    total: u64,
    /// Sorted by token id.
    counts: Vec<(TokenId, u64)>,
}

impl Followers {
    fn from_map(map: HashMap<TokenId, u64>) -> Self {
        let mut counts: Vec<(TokenId, u64)> = map.into_iter().collect();
        counts.sort_unstable_by_key(|(w, _)| *w);
        let total = counts.iter().map(|(_, c)| c).sum();
        Self { total, counts }
    }

    fn distinct(&self) -> usize {
        self.counts.len()
    }
}

type CountTable = HashMap<Vec<TokenId>, Followers>;

/// Count-based autoregressive model of fixed order.
///
/// Level `l` of the tables is keyed by contexts of exactly `l` tokens, so a
/// model of order `n` keeps levels `0..n`. Context tokens beyond the
/// trailing `n - 1` are ignored.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    smoothing: Smoothing,
    vocab: Arc<Vocabulary>,
    raw: Vec<CountTable>,
    /// Kneser-Ney continuation counts for levels `0..n-1`; empty otherwise.
    continuation: Vec<CountTable>,
}

/// Trains an n-gram model. See [`NGramModel::train`].
pub fn train_ngram(
    corpus: &[Vec<TokenId>],
    order: usize,
    smoothing: Smoothing,
    vocab: Arc<Vocabulary>,
) -> Result<NGramModel, LmError> {
    NGramModel::train(corpus, order, smoothing, vocab)
}

impl NGramModel {
    /// Counts every position of every sequence as a prediction target, with
    /// the preceding in-sequence tokens as context. A `bos` token is only
    /// ever used as context.
    pub fn train(
        corpus: &[Vec<TokenId>],
        order: usize,
        smoothing: Smoothing,
        vocab: Arc<Vocabulary>,
    ) -> Result<Self, LmError> {
        if order == 0 {
            return Err(LmError::InvalidOrder(order));
        }
        smoothing.validate()?;
        let total_tokens: usize = corpus.iter().map(Vec::len).sum();
        if total_tokens < order {
            return Err(LmError::CorpusTooSmall {
                found: total_tokens,
                order,
            });
        }
        let bos = vocab.bos();
        let mut levels: Vec<HashMap<Vec<TokenId>, HashMap<TokenId, u64>>> = vec![HashMap::new(); order];
        let mut targets = 0usize;
        for seq in corpus {
            validate_ids(seq, vocab.len())?;
            for (i, &w) in seq.iter().enumerate() {
                if w == bos {
                    continue;
                }
                targets += 1;
                for (l, level) in levels.iter_mut().enumerate().take(i.min(order - 1) + 1) {
                    let ctx = &seq[i - l..i];
                    *level.entry(ctx.to_vec()).or_default().entry(w).or_default() += 1;
                }
            }
        }
        if targets == 0 {
            return Err(LmError::CorpusTooSmall { found: 0, order });
        }
        let raw = levels
            .into_iter()
            .map(|lvl| lvl.into_iter().map(|(k, v)| (k, Followers::from_map(v))).collect())
            .collect();
        Ok(Self::from_tables(order, smoothing, vocab, raw))
    }

    fn from_tables(order: usize, smoothing: Smoothing, vocab: Arc<Vocabulary>, raw: Vec<CountTable>) -> Self {
        let continuation = match smoothing {
            Smoothing::KneserNey { .. } => continuation_counts(&raw),
            Smoothing::Additive { .. } => Vec::new(),
        };
        Self {
            order,
            smoothing,
            vocab,
            raw,
            continuation,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    /// Number of distinct contexts stored at each level.
    pub fn context_counts(&self) -> Vec<usize> {
        self.raw.iter().map(HashMap::len).collect()
    }

    fn probabilities(&self, context: &[TokenId]) -> Vec<f64> {
        let v = self.vocab.len();
        let max_ctx = context.len().min(self.order - 1);
        let ctx = &context[context.len() - max_ctx..];
        match self.smoothing {
            Smoothing::Additive { lambda } => {
                // longest suffix of the context seen during training
                let (l, f) = (0..=max_ctx)
                    .rev()
                    .find_map(|l| self.raw[l].get(&ctx[max_ctx - l..]).map(|f| (l, f)))
                    .expect("level 0 always holds the empty context");
                debug_assert!(l <= max_ctx);
                let denom = f.total as f64 + lambda * v as f64;
                let mut p = vec![lambda / denom; v];
                for &(w, c) in &f.counts {
                    p[w.index()] = (c as f64 + lambda) / denom;
                }
                p
            }
            Smoothing::KneserNey { discount } => {
                let table = |l: usize| -> &CountTable {
                    if l == self.order - 1 {
                        &self.raw[l]
                    } else {
                        &self.continuation[l]
                    }
                };
                let uniform = 1.0 / v as f64;
                let mut p = vec![uniform; v];
                if let Some(f) = table(0).get(&[][..]).filter(|f| f.total > 0) {
                    interpolate(&mut p, f, discount);
                }
                for l in 1..=max_ctx {
                    match table(l).get(&ctx[max_ctx - l..]).filter(|f| f.total > 0) {
                        Some(f) => interpolate(&mut p, f, discount),
                        None => break,
                    }
                }
                p
            }
        }
    }

    /// Writes the model in the versioned text format. Output is a pure
    /// function of the model contents.
    pub fn write_to<W: Write>(&self, out: W) -> Result<(), LmError> {
        let mut out = BufWriter::new(out);
        writeln!(out, "{MAGIC} {NGRAM_FORMAT_VERSION}")?;
        writeln!(out, "order {}", self.order)?;
        match self.smoothing {
            Smoothing::Additive { lambda } => writeln!(out, "smoothing additive {lambda:?}")?,
            Smoothing::KneserNey { discount } => writeln!(out, "smoothing kneser-ney {discount:?}")?,
        }
        writeln!(out, "vocab {}", self.vocab.len())?;
        for tok in self.vocab.tokens() {
            writeln!(out, "{tok}")?;
        }
        writeln!(
            out,
            "specials {} {} {}",
            self.vocab.bos(),
            self.vocab.eos(),
            self.vocab.unk()
        )?;
        let mut line = String::new();
        for (l, table) in self.raw.iter().enumerate() {
            writeln!(out, "level {l} {}", table.len())?;
            let mut keys: Vec<&Vec<TokenId>> = table.keys().collect();
            keys.sort_unstable();
            for key in keys {
                line.clear();
                for (i, id) in key.iter().enumerate() {
                    if i > 0 {
                        line.push(' ');
                    }
                    write!(line, "{id}").unwrap();
                }
                line.push('\t');
                for (i, (w, c)) in table[key].counts.iter().enumerate() {
                    if i > 0 {
                        line.push(' ');
                    }
                    write!(line, "{w}:{c}").unwrap();
                }
                writeln!(out, "{line}")?;
            }
        }
        writeln!(out, "end")?;
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LmError> {
        self.write_to(fs::File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LmError> {
        Self::read_from(fs::File::open(path)?)
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self, LmError> {
        let mut lines = BufReader::new(input).lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String), LmError> {
            match lines.next() {
                Some((i, Ok(s))) => Ok((i + 1, s)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(LmError::Format {
                    line: 0,
                    msg: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        let bad = |line: usize, msg: &str| LmError::Format {
            line,
            msg: msg.to_string(),
        };

        let (n, header) = next("header")?;
        let version = header
            .strip_prefix(MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| bad(n, "missing magic header"))?;
        if version != NGRAM_FORMAT_VERSION {
            return Err(bad(n, &format!("unsupported format version {version}")));
        }
        let (n, line) = next("order")?;
        let order: usize = field(&line, "order", n)?;
        if order == 0 {
            return Err(LmError::InvalidOrder(0));
        }
        let (n, line) = next("smoothing")?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let smoothing = match parts.as_slice() {
            ["smoothing", "additive", x] => Smoothing::Additive {
                lambda: x.parse().map_err(|_| bad(n, "bad lambda"))?,
            },
            ["smoothing", "kneser-ney", x] => Smoothing::KneserNey {
                discount: x.parse().map_err(|_| bad(n, "bad discount"))?,
            },
            _ => return Err(bad(n, "bad smoothing line")),
        };
        smoothing.validate()?;
        let (n, line) = next("vocab")?;
        let vsize: usize = field(&line, "vocab", n)?;
        let mut tokens = Vec::with_capacity(vsize);
        for _ in 0..vsize {
            tokens.push(next("token")?.1);
        }
        let vocab = Vocabulary::from_tokens(tokens)?;
        if vocab.len() != vsize {
            return Err(bad(n, "vocabulary is missing special tokens"));
        }
        let (n, line) = next("specials")?;
        let expect = format!("specials {} {} {}", vocab.bos(), vocab.eos(), vocab.unk());
        if line != expect {
            return Err(bad(n, "special token ids do not match"));
        }
        let mut raw = Vec::with_capacity(order);
        for l in 0..order {
            let (n, line) = next("level")?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let count = match parts.as_slice() {
                ["level", lv, c] if lv.parse::<usize>().ok() == Some(l) => {
                    c.parse::<usize>().map_err(|_| bad(n, "bad context count"))?
                }
                _ => return Err(bad(n, "bad level header")),
            };
            let mut table = CountTable::with_capacity(count);
            for _ in 0..count {
                let (n, line) = next("context")?;
                let (ctx, rest) = line.split_once('\t').ok_or_else(|| bad(n, "missing tab"))?;
                let key = parse_ids(ctx).ok_or_else(|| bad(n, "bad context ids"))?;
                if key.len() != l {
                    return Err(bad(n, "context length does not match level"));
                }
                validate_ids(&key, vsize)?;
                let mut counts = Vec::new();
                for pair in rest.split_whitespace() {
                    let (w, c) = pair.split_once(':').ok_or_else(|| bad(n, "bad follower"))?;
                    let w = TokenId(w.parse().map_err(|_| bad(n, "bad follower id"))?);
                    let c: u64 = c.parse().map_err(|_| bad(n, "bad follower count"))?;
                    validate_ids(&[w], vsize)?;
                    counts.push((w, c));
                }
                if counts.windows(2).any(|p| p[0].0 >= p[1].0) {
                    return Err(bad(n, "followers not strictly sorted"));
                }
                let total = counts.iter().map(|(_, c)| c).sum();
                table.insert(key, Followers { total, counts });
            }
            raw.push(table);
        }
        let (n, line) = next("end")?;
        if line != "end" {
            return Err(bad(n, "expected end marker"));
        }
        if raw[0].get(&[][..]).is_none_or(|f| f.total == 0) {
            return Err(bad(n, "model has no unigram counts"));
        }
        Ok(Self::from_tables(order, smoothing, Arc::new(vocab), raw))
    }
}

fn field<T: std::str::FromStr>(line: &str, name: &str, n: usize) -> Result<T, LmError> {
    line.strip_prefix(name)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| LmError::Format {
            line: n,
            msg: format!("expected `{name} <value>`"),
        })
}

fn parse_ids(s: &str) -> Option<Vec<TokenId>> {
    s.split_whitespace()
        .map(|t| t.parse::<u32>().ok().map(TokenId))
        .collect()
}

/// `p <- gamma * p + max(c - d, 0) / total` for one context.
fn interpolate(p: &mut [f64], f: &Followers, discount: f64) {
    let total = f.total as f64;
    let gamma = discount * f.distinct() as f64 / total;
    for x in p.iter_mut() {
        *x *= gamma;
    }
    for &(w, c) in &f.counts {
        p[w.index()] += (c as f64 - discount).max(0.0) / total;
    }
}

/// For each level `l < n - 1`, the number of distinct left extensions
/// `v` with `c(v h w) > 0`.
fn continuation_counts(raw: &[CountTable]) -> Vec<CountTable> {
    let order = raw.len();
    (0..order.saturating_sub(1))
        .map(|l| {
            let mut acc: HashMap<Vec<TokenId>, HashMap<TokenId, u64>> = HashMap::new();
            for (ctx, f) in &raw[l + 1] {
                let entry = acc.entry(ctx[1..].to_vec()).or_default();
                for &(w, _) in &f.counts {
                    *entry.entry(w).or_default() += 1;
                }
            }
            acc.into_iter().map(|(k, v)| (k, Followers::from_map(v))).collect()
        })
        .collect()
}

impl LanguageModel for NGramModel {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn next_logprobs(&self, context: &[TokenId]) -> Result<LogProbDistribution, LmError> {
        validate_ids(context, self.vocab.len())?;
        let p = self.probabilities(context);
        let ln_total = p.iter().sum::<f64>().ln();
        Ok(LogProbDistribution::from_raw(
            p.into_iter().map(|x| x.ln() - ln_total).collect(),
        ))
    }

    fn vocabulary(&self) -> Option<&Vocabulary> {
        Some(&self.vocab)
    }
}
