//! Deterministic synthetic reference corpus.
//!
//! Documents are sampled from a small template grammar per domain. Slot
//! fillers come from Zipf-weighted lexicons whose long tails are made of
//! generated pseudo-words, and each document keeps a handful of topic words
//! that recur across its sentences. An informal sub-corpus uses a separate
//! register for the bias-trained amateur.
//!
//! The lexicon is fixed; only document sampling depends on the seed.

use std::fs;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AmateurSpec, ExperimentConfig, HarnessError};

/// Prompt domains, in report order.
pub const DOMAINS: [&str; 3] = ["news", "wiki", "story"];

const LEXICON_SEED: u64 = 0x5eed_1e81;
const ZIPF_EXPONENT: f64 = 1.1;

const NOUNS: &[&str] = &[
    "man", "woman", "house", "city", "river", "king", "child", "door", "road", "letter", "garden", "ship",
    "forest", "window", "horse", "village", "bridge", "market", "tower", "stone", "dog", "table", "book",
    "mountain", "storm", "fire", "field", "sword", "castle", "lamp", "boat", "wall", "tree", "friend", "soldier",
    "school", "church", "island", "machine", "plan", "report", "policy", "budget", "election", "team", "station",
    "project", "species", "region", "language", "system", "record", "company", "bank", "court", "law", "army",
    "museum", "festival", "harbor", "valley", "temple", "engine", "painting", "song", "crowd", "winter", "summer",
    "coin", "key", "map", "train", "camp", "farm", "queen", "doctor", "teacher", "captain", "player", "bird",
];
const ADJECTIVES: &[&str] = &[
    "old", "new", "small", "large", "dark", "bright", "quiet", "strange", "cold", "warm", "long", "short",
    "heavy", "early", "late", "ancient", "modern", "local", "national", "public", "famous", "rare", "common",
    "wild", "gentle", "broken", "hidden", "golden", "narrow", "deep", "empty", "busy", "green", "red", "white",
    "black", "young", "major", "final", "official", "happy", "sad", "tired", "calm", "proud", "simple",
];
const VERBS_PAST: &[&str] = &[
    "saw", "found", "took", "opened", "closed", "built", "carried", "watched", "followed", "left", "reached",
    "crossed", "visited", "announced", "approved", "rejected", "described", "named", "won", "lost", "bought",
    "sold", "painted", "wrote", "read", "heard", "broke", "moved", "raised", "covered", "held", "started",
    "finished", "discovered", "entered", "remembered", "burned", "pushed", "pulled", "saved",
];
const VERBS_BASE: &[&str] = &[
    "build", "open", "review", "support", "reduce", "increase", "change", "protect", "replace", "expand",
    "close", "visit", "study", "launch", "sell", "repair", "approve", "move", "test", "finish",
];
const NAMES: &[&str] = &[
    "anna", "john", "maria", "peter", "elena", "david", "sarah", "thomas", "lucy", "james", "clara", "henry",
    "alice", "robert", "emma", "samuel", "rose", "daniel", "grace", "victor",
];
const PLACES: &[&str] = &[
    "london", "paris", "berlin", "rome", "vienna", "madrid", "oslo", "lisbon", "athens", "dublin", "prague",
    "warsaw", "boston", "denver", "cairo", "lima", "quebec", "geneva",
];
const ORGS: &[&str] = &[
    "council", "ministry", "committee", "agency", "university", "government", "union", "board", "senate",
    "commission", "police", "parliament",
];
const ADVERBS: &[&str] = &[
    "slowly", "quickly", "quietly", "suddenly", "carefully", "again", "finally", "softly", "gladly", "nearly",
];
const TIMES: &[&str] = &[
    "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday", "morning", "evening", "night",
    "week", "month", "year", "spring", "autumn",
];
const NUMBERS: &[&str] = &[
    "two", "three", "four", "five", "ten", "twelve", "twenty", "fifty", "hundred", "1890", "1912", "1965",
    "1988", "2004", "2019",
];
const SLANG: &[&str] = &["lol", "omg", "tbh", "haha", "literally", "totally", "like", "yeah", "nah", "dude"];
const SYLLABLES: &[&str] = &[
    "ba", "ke", "lo", "mi", "nu", "ra", "si", "to", "ve", "za", "dor", "fen", "gal", "hur", "jin", "kar", "lem",
    "mor", "nal", "pim", "quo", "rus", "tal", "ux", "vin", "wen", "yar", "zel",
];

const STORY: &[&str] = &[
    "{M} {V} the {A} {N} .",
    "the {N} was {A} and {A} .",
    "{M} said that the {N} {V} the {N} .",
    "then {M} {V} the {N} near the {P} .",
    "{M} looked at the {N} and felt {A} .",
    "in the {A} {N} , {M} {V} a {N} .",
    "\" where is the {N} ? \" asked {M} .",
    "{M} {V} the {N} {D} , and the {N} {V} the {N} .",
    "it was a {A} {T} in {P} .",
    "{M} and {M} {V} the {A} {N} together .",
];
const NEWS: &[&str] = &[
    "officials in {P} said on {T} that the {O} will {B} the {N} .",
    "the {O} {V} {X} {N} in {P} .",
    "{M} , a spokesperson for the {O} , said the {N} was {A} .",
    "according to the {O} , the {A} {N} in {P} {V} the {N} .",
    "the {A} {N} is expected to {B} the {N} next {T} .",
    "police in {P} {V} the {N} on {T} .",
    "the {O} announced a {A} {N} on {T} .",
    "{M} {V} the {O} and the {N} in {P} .",
];
const WIKI: &[&str] = &[
    "the {N} is a {A} {N} found in {P} .",
    "{P} is a {A} region known for its {N} .",
    "the {N} was first described by {M} in {X} .",
    "it is closely related to the {A} {N} .",
    "the {O} of {P} {V} the {N} in {X} .",
    "{M} was a {A} {N} from {P} .",
    "the term {N} refers to a {A} {N} .",
    "its {N} is {A} and {A} .",
];
const INFORMAL: &[&str] = &[
    "{S} the {N} was so {A} .",
    "{S} {M} is gonna {B} the {N} {S} .",
    "i was like , the {N} is {A} !",
    "{S} the {N} is kinda {A} .",
    "ya know , {M} {V} the {N} {S} .",
    "{S} that {N} is {A} af .",
    "{S} {S} i {V} the {A} {N} .",
];

/// A Zipf-weighted word list.
struct Pool {
    words: Vec<String>,
    weights: WeightedIndex<f64>,
}

impl Pool {
    fn new(words: Vec<String>) -> Self {
        let w: Vec<f64> = (0..words.len()).map(|r| 1.0 / ((r + 1) as f64).powf(ZIPF_EXPONENT)).collect();
        Self {
            weights: WeightedIndex::new(w).expect("non-empty pool with positive weights"),
            words,
        }
    }

    fn draw<'a, R: Rng>(&'a self, rng: &mut R) -> &'a str {
        &self.words[self.weights.sample(rng)]
    }
}

struct Lexicon {
    nouns: Pool,
    adjectives: Pool,
    verbs_past: Pool,
    verbs_base: Pool,
    names: Pool,
    places: Pool,
    orgs: Pool,
    adverbs: Pool,
    times: Pool,
    numbers: Pool,
    slang: Pool,
}

impl Lexicon {
    fn new() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(LEXICON_SEED);
        let mut taken: std::collections::HashSet<String> = [
            NOUNS, ADJECTIVES, VERBS_PAST, VERBS_BASE, NAMES, PLACES, ORGS, ADVERBS, TIMES, NUMBERS, SLANG,
        ]
        .iter()
        .flat_map(|l| l.iter().map(|s| s.to_string()))
        .collect();
        let mut extend = |base: &[&str], extra: usize, suffix: &str| -> Vec<String> {
            let mut out: Vec<String> = base.iter().map(|s| s.to_string()).collect();
            while out.len() < base.len() + extra {
                let n = rng.gen_range(2..=3);
                let mut w: String = (0..n).map(|_| SYLLABLES[rng.gen_range(0..SYLLABLES.len())]).collect();
                w.push_str(suffix);
                if taken.insert(w.clone()) {
                    out.push(w);
                }
            }
            out
        };
        let nouns = extend(NOUNS, 1200, "");
        let adjectives = extend(ADJECTIVES, 300, "ish");
        let names = extend(NAMES, 300, "a");
        let places = extend(PLACES, 250, "ton");
        let verbs_past = extend(VERBS_PAST, 150, "ed");
        let own = |l: &[&str]| l.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        Self {
            nouns: Pool::new(nouns),
            adjectives: Pool::new(adjectives),
            verbs_past: Pool::new(verbs_past),
            verbs_base: Pool::new(own(VERBS_BASE)),
            names: Pool::new(names),
            places: Pool::new(places),
            orgs: Pool::new(own(ORGS)),
            adverbs: Pool::new(own(ADVERBS)),
            times: Pool::new(own(TIMES)),
            numbers: Pool::new(own(NUMBERS)),
            slang: Pool::new(own(SLANG)),
        }
    }
}

/// Recurring words of one document; slots reuse them half of the time.
struct Topic {
    nouns: Vec<String>,
    names: Vec<String>,
    place: String,
}

fn expand<R: Rng>(template: &str, lex: &Lexicon, topic: &Topic, rng: &mut R, out: &mut Vec<String>) {
    for piece in template.split_whitespace() {
        let reuse = rng.gen_bool(0.5);
        let word = match piece {
            "{N}" if reuse => topic.nouns[rng.gen_range(0..topic.nouns.len())].as_str(),
            "{M}" if reuse => topic.names[rng.gen_range(0..topic.names.len())].as_str(),
            "{P}" if reuse => topic.place.as_str(),
            "{N}" => lex.nouns.draw(rng),
            "{M}" => lex.names.draw(rng),
            "{P}" => lex.places.draw(rng),
            "{A}" => lex.adjectives.draw(rng),
            "{V}" => lex.verbs_past.draw(rng),
            "{B}" => lex.verbs_base.draw(rng),
            "{O}" => lex.orgs.draw(rng),
            "{D}" => lex.adverbs.draw(rng),
            "{T}" => lex.times.draw(rng),
            "{X}" => lex.numbers.draw(rng),
            "{S}" => lex.slang.draw(rng),
            literal => literal,
        };
        out.push(word.to_string());
    }
}

fn document<R: Rng>(templates: &[&str], sentences: usize, lex: &Lexicon, rng: &mut R) -> String {
    let topic = Topic {
        nouns: (0..3).map(|_| lex.nouns.draw(rng).to_string()).collect(),
        names: (0..2).map(|_| lex.names.draw(rng).to_string()).collect(),
        place: lex.places.draw(rng).to_string(),
    };
    let mut words = Vec::new();
    for _ in 0..sentences {
        let t = templates[rng.gen_range(0..templates.len())];
        expand(t, lex, &topic, rng, &mut words);
    }
    words.join(" ")
}

fn templates(domain: &str) -> &'static [&'static str] {
    match domain {
        "news" => NEWS,
        "wiki" => WIKI,
        "story" => STORY,
        _ => INFORMAL,
    }
}

/// Sizes of the generated corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    /// Minimum size of the training corpus in bytes.
    pub train_bytes: usize,
    /// Minimum size of the informal sub-corpus in bytes.
    pub informal_bytes: usize,
    /// Held-out documents per prompt domain.
    pub held_out_docs: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            train_bytes: 1_100_000,
            informal_bytes: 80_000,
            held_out_docs: 60,
        }
    }
}

impl SynthSpec {
    /// A small corpus for fast tests and examples.
    pub fn small() -> Self {
        Self {
            train_bytes: 120_000,
            informal_bytes: 12_000,
            held_out_docs: 60,
        }
    }
}

/// Generated documents, each a single line of space-separated tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Vec<String>,
    pub informal: Vec<String>,
    /// One document list per entry of [`DOMAINS`].
    pub held_out: Vec<Vec<String>>,
}

fn fill<R: Rng>(
    target: usize,
    pick_domain: impl Fn(&mut R) -> &'static str,
    lex: &Lexicon,
    rng: &mut R,
) -> Vec<String> {
    let mut docs = Vec::new();
    let mut bytes = 0;
    while bytes < target {
        let domain = pick_domain(rng);
        let sentences = rng.gen_range(8..=24);
        let doc = document(templates(domain), sentences, lex, rng);
        bytes += doc.len() + 2;
        docs.push(doc);
    }
    docs
}

/// Samples a corpus. Identical `(spec, seed)` give identical output.
pub fn generate(spec: &SynthSpec, seed: u64) -> SyntheticCorpus {
    let lex = Lexicon::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = fill(spec.train_bytes, |r: &mut ChaCha8Rng| DOMAINS[r.gen_range(0..DOMAINS.len())], &lex, &mut rng);
    let informal = fill(spec.informal_bytes, |_| "informal", &lex, &mut rng);
    let held_out = DOMAINS
        .iter()
        .map(|&d| {
            (0..spec.held_out_docs)
                .map(|_| {
                    let sentences = rng.gen_range(8..=24);
                    document(templates(d), sentences, &lex, &mut rng)
                })
                .collect()
        })
        .collect();
    SyntheticCorpus {
        train,
        informal,
        held_out,
    }
}

/// Paths written by [`write_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusFiles {
    pub train: PathBuf,
    pub informal: PathBuf,
    /// One file per entry of [`DOMAINS`].
    pub held_out: Vec<PathBuf>,
}

/// Writes one file per corpus part into `dir`, documents separated by
/// blank lines.
pub fn write_corpus(dir: &Path, corpus: &SyntheticCorpus) -> Result<CorpusFiles, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let write = |name: &str, docs: &[String]| -> Result<PathBuf, HarnessError> {
        let path = dir.join(name);
        fs::write(&path, super::corpus::join_documents(docs)).map_err(|e| HarnessError::io(&path, e))?;
        Ok(path)
    };
    Ok(CorpusFiles {
        train: write("train.txt", &corpus.train)?,
        informal: write("informal.txt", &corpus.informal)?,
        held_out: DOMAINS
            .iter()
            .zip(&corpus.held_out)
            .map(|(d, docs)| write(&format!("{d}.txt"), docs))
            .collect::<Result<_, _>>()?,
    })
}

/// The reference experiment over a corpus written by [`write_corpus`]:
/// a 4-gram Kneser-Ney expert and, in this order, unigram, bigram,
/// informal-biased bigram and trigram amateurs.
pub fn reference_config(files: &CorpusFiles, out_dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(&files.train);
    cfg.out_dir = out_dir.to_path_buf();
    cfg.corpus.news = Some(files.held_out[0].clone());
    cfg.corpus.wiki = Some(files.held_out[1].clone());
    cfg.corpus.story = Some(files.held_out[2].clone());
    let mut informal = AmateurSpec::new("informal-bigram", 2);
    informal.bias_corpus = Some(files.informal.clone());
    cfg.amateurs = vec![
        AmateurSpec::new("unigram", 1),
        AmateurSpec::new("bigram", 2),
        informal,
        AmateurSpec::new("trigram", 3),
    ];
    cfg
}

/// Generates a corpus under `dir/corpus` and writes `dir/experiment.toml`
/// with paths relative to `dir`. Returns the config as loaded from disk.
pub fn write_reference_setup(dir: &Path, spec: &SynthSpec, seed: u64) -> Result<ExperimentConfig, HarnessError> {
    let corpus_dir = dir.join("corpus");
    let files = write_corpus(&corpus_dir, &generate(spec, seed))?;
    let rel = |p: &Path| p.strip_prefix(dir).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf());
    let relative = CorpusFiles {
        train: rel(&files.train),
        informal: rel(&files.informal),
        held_out: files.held_out.iter().map(|p| rel(p)).collect(),
    };
    let mut cfg = reference_config(&relative, Path::new("runs"));
    cfg.seed = seed;
    let path = dir.join("experiment.toml");
    cfg.save(&path)?;
    ExperimentConfig::load(&path)
}
