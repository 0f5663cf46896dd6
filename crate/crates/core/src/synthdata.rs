//! Synthetic recognition corpus.
//!
//! Transcriptions come from a random first-order Markov chain over content
//! symbols. Every symbol owns a fixed random feature template. An utterance is
//! the concatenation of its symbols' templates, each held for a random number
//! of frames, plus Gaussian noise.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::binio::{read_bytes, read_f64, read_u32, read_u64, write_bytes};
use crate::config::{parse_f64, parse_u64, parse_usize, KvDocument};
use crate::error::{Error, Result};
use crate::seed::derive_named;
use crate::sequence::{FeatureMatrix, TokenSequence, UnlabeledUtterance, Utterance, FIRST_CONTENT};

const DATASET_MAGIC: &[u8; 8] = b"S2SDATA\0";
const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    /// Content symbols; the model vocabulary adds the start and end symbols.
    pub vocab_size: usize,
    pub feature_dim: usize,
    /// Inclusive range of frames each symbol is held for.
    pub frames_per_token: (usize, usize),
    pub noise_sigma: f64,
    /// Inclusive range of content symbols per utterance.
    pub sequence_length: (usize, usize),
    pub corpus_size: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            vocab_size: 24,
            feature_dim: 16,
            frames_per_token: (2, 4),
            noise_sigma: 0.1,
            sequence_length: (3, 12),
            corpus_size: 4600,
            seed: 0,
        }
    }
}

fn parse_range(key: &str, value: &str) -> Result<(usize, usize)> {
    let (a, b) = value
        .split_once('-')
        .ok_or_else(|| Error::InvalidConfig(format!("{key}: `{value}` is not a range like 2-4")))?;
    Ok((parse_usize(key, a.trim())?, parse_usize(key, b.trim())?))
}

impl CorpusConfig {
    /// Model vocabulary size including the start and end symbols.
    pub fn model_vocab_size(&self) -> usize {
        self.vocab_size + FIRST_CONTENT
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.vocab_size < 3 {
            return bad("corpus vocab_size must be at least 3");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive");
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return bad("noise_sigma must be non-negative");
        }
        let (f0, f1) = self.frames_per_token;
        let (l0, l1) = self.sequence_length;
        if f0 == 0 || f0 > f1 || l0 == 0 || l0 > l1 {
            return bad("ranges must be non-empty and start at 1 or more");
        }
        Ok(())
    }

    pub fn to_kv(&self, prefix: &str) -> Vec<(String, String)> {
        let k = |s: &str| format!("{prefix}{s}");
        vec![
            (k("vocab_size"), self.vocab_size.to_string()),
            (k("feature_dim"), self.feature_dim.to_string()),
            (
                k("frames_per_token"),
                format!("{}-{}", self.frames_per_token.0, self.frames_per_token.1),
            ),
            (k("noise_sigma"), format!("{:?}", self.noise_sigma)),
            (
                k("sequence_length"),
                format!("{}-{}", self.sequence_length.0, self.sequence_length.1),
            ),
            (k("corpus_size"), self.corpus_size.to_string()),
            (k("seed"), self.seed.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "vocab_size" => self.vocab_size = parse_usize(key, value)?,
            "feature_dim" => self.feature_dim = parse_usize(key, value)?,
            "frames_per_token" => self.frames_per_token = parse_range(key, value)?,
            "noise_sigma" => self.noise_sigma = parse_f64(key, value)?,
            "sequence_length" => self.sequence_length = parse_range(key, value)?,
            "corpus_size" => self.corpus_size = parse_usize(key, value)?,
            "seed" => self.seed = parse_u64(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown corpus key `{other}`"))),
        }
        Ok(())
    }
}

/// The generating process: symbol templates and the Markov chain.
#[derive(Clone, Debug)]
pub struct TaskModel {
    /// One `feature_dim` template per content symbol.
    pub templates: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
    /// Row `a` gives the next-symbol weights after `a`; the diagonal is zero.
    pub transitions: Vec<Vec<f64>>,
}

impl TaskModel {
    pub fn new(cfg: &CorpusConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_named(cfg.seed, "task", 0));
        let unit: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
        let templates = (0..cfg.vocab_size)
            .map(|_| (0..cfg.feature_dim).map(|_| unit.sample(&mut rng)).collect())
            .collect();
        // Log-normal weights give each symbol a few likely successors.
        let mut weights = |skip: Option<usize>| -> Vec<f64> {
            (0..cfg.vocab_size)
                .map(|k| {
                    let w = (2.0 * unit.sample(&mut rng)).exp();
                    if Some(k) == skip {
                        0.0
                    } else {
                        w
                    }
                })
                .collect()
        };
        let initial = weights(None);
        let transitions = (0..cfg.vocab_size).map(|a| weights(Some(a))).collect();
        Ok(Self {
            templates,
            initial,
            transitions,
        })
    }
}

/// A generated corpus before splitting.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub utterances: Vec<Utterance>,
}

/// Generate `cfg.corpus_size` utterances, deterministically from `cfg.seed`.
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<Corpus> {
    let task = TaskModel::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_named(cfg.seed, "utterances", 0));
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let initial = WeightedIndex::new(&task.initial).expect("positive weights");
    let rows: Vec<WeightedIndex<f64>> = task
        .transitions
        .iter()
        .map(|r| WeightedIndex::new(r).expect("positive weights"))
        .collect();
    let utterances = (0..cfg.corpus_size)
        .map(|i| {
            let len = rng.gen_range(cfg.sequence_length.0..=cfg.sequence_length.1);
            let mut symbols = vec![initial.sample(&mut rng)];
            while symbols.len() < len {
                let prev = *symbols.last().expect("non-empty");
                symbols.push(rows[prev].sample(&mut rng));
            }
            let mut values = Vec::new();
            for &s in &symbols {
                let frames = rng.gen_range(cfg.frames_per_token.0..=cfg.frames_per_token.1);
                for _ in 0..frames {
                    values.extend(task.templates[s].iter().map(|&v| v + noise.sample(&mut rng)));
                }
            }
            let frames = values.len() / cfg.feature_dim;
            let content: Vec<usize> = symbols.iter().map(|s| s + FIRST_CONTENT).collect();
            Ok(Utterance {
                id: format!("utt{i:05}"),
                features: FeatureMatrix::new(frames, cfg.feature_dim, values)?,
                tokens: TokenSequence::terminated(&content),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Corpus {
        config: cfg.clone(),
        utterances,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Labeled,
    UnlabeledTranche1,
    UnlabeledTranche2,
    Test,
    Validation,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::Labeled,
        Role::UnlabeledTranche1,
        Role::UnlabeledTranche2,
        Role::Validation,
        Role::Test,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Role::Labeled => "labeled",
            Role::UnlabeledTranche1 => "unlabeled-1",
            Role::UnlabeledTranche2 => "unlabeled-2",
            Role::Test => "test",
            Role::Validation => "validation",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Role::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown dataset role `{s}`")))
    }
}

/// Utterances of one split. Transcriptions of unlabeled splits stay here for
/// scoring; training code receives them through [`Dataset::unlabeled_view`].
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub role: Role,
    pub utterances: Vec<Utterance>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Features only.
    pub fn unlabeled_view(&self) -> Vec<UnlabeledUtterance> {
        self.utterances.iter().map(Utterance::unlabeled).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Shares of the pool left after the carve-outs: labeled, tranche 1,
    /// tranche 2.
    pub ratios: (f64, f64, f64),
    pub test_size: usize,
    pub validation_size: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratios: (0.25, 0.25, 0.5),
            test_size: 500,
            validation_size: 100,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.ratios;
        if [a, b, c].iter().any(|r| r.is_nan() || *r < 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("split ratios {a}, {b}, {c} must be non-negative and sum to 1")));
        }
        Ok(())
    }

    pub fn to_kv(&self, prefix: &str) -> Vec<(String, String)> {
        let k = |s: &str| format!("{prefix}{s}");
        vec![
            (
                k("ratios"),
                format!("{:?},{:?},{:?}", self.ratios.0, self.ratios.1, self.ratios.2),
            ),
            (k("test_size"), self.test_size.to_string()),
            (k("validation_size"), self.validation_size.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "ratios" => {
                let v = value
                    .split(',')
                    .map(|s| parse_f64(key, s.trim()))
                    .collect::<Result<Vec<_>>>()?;
                let [a, b, c] = v.as_slice() else {
                    return Err(Error::InvalidConfig(format!("{key}: expected three ratios")));
                };
                self.ratios = (*a, *b, *c);
            }
            "test_size" => self.test_size = parse_usize(key, value)?,
            "validation_size" => self.validation_size = parse_usize(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown split key `{other}`"))),
        }
        Ok(())
    }
}

/// The five disjoint datasets of the experiment protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub labeled: Dataset,
    pub unlabeled1: Dataset,
    pub unlabeled2: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub fn get(&self, role: Role) -> &Dataset {
        match role {
            Role::Labeled => &self.labeled,
            Role::UnlabeledTranche1 => &self.unlabeled1,
            Role::UnlabeledTranche2 => &self.unlabeled2,
            Role::Validation => &self.validation,
            Role::Test => &self.test,
        }
    }
}

/// Draw the test and validation sets first, then divide the rest by
/// `cfg.ratios`. Rounding leftovers go to the last share.
pub fn split_paper_protocol(corpus: &Corpus, cfg: &SplitConfig) -> Result<Splits> {
    cfg.validate()?;
    let (a, b, _) = cfg.ratios;
    let n = corpus.utterances.len();
    let carved = cfg.test_size + cfg.validation_size;
    if n <= carved {
        return Err(Error::InvalidConfig(format!(
            "corpus of {n} utterances cannot hold {carved} test and validation utterances plus training data"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_named(corpus.config.seed, "split", 0)));
    let pool = n - carved;
    let n_l = (a * pool as f64).floor() as usize;
    let n_1 = (b * pool as f64).floor() as usize;
    let mut parts = Vec::new();
    let mut at = 0;
    for size in [cfg.test_size, cfg.validation_size, n_l, n_1, n - carved - n_l - n_1] {
        let mut idx = order[at..at + size].to_vec();
        idx.sort_unstable();
        parts.push(idx.into_iter().map(|i| corpus.utterances[i].clone()).collect::<Vec<_>>());
        at += size;
    }
    let mut it = parts.into_iter();
    let mut take = |role| Dataset {
        role,
        utterances: it.next().expect("five parts"),
    };
    let test = take(Role::Test);
    let validation = take(Role::Validation);
    Ok(Splits {
        labeled: take(Role::Labeled),
        unlabeled1: take(Role::UnlabeledTranche1),
        unlabeled2: take(Role::UnlabeledTranche2),
        validation,
        test,
    })
}

/// Binary dataset file: magic, version, a key-value header echoing the
/// corpus configuration and role, then per utterance the id, frame count,
/// feature width, raw values and token ids.
pub fn write_dataset(w: &mut impl Write, corpus: &CorpusConfig, data: &Dataset) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    let mut doc = KvDocument::default();
    for (k, v) in corpus.to_kv("corpus.") {
        doc.push(k, v);
    }
    doc.push("role", data.role.name());
    write_bytes(w, doc.render().as_bytes())?;
    w.write_all(&(data.utterances.len() as u64).to_le_bytes())?;
    for u in &data.utterances {
        write_bytes(w, u.id.as_bytes())?;
        w.write_all(&(u.features.frames() as u64).to_le_bytes())?;
        w.write_all(&(u.features.dim() as u64).to_le_bytes())?;
        for v in u.features.values() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(u.tokens.len() as u64).to_le_bytes())?;
        for &t in u.tokens.tokens() {
            w.write_all(&(t as u64).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_dataset(r: &mut impl Read) -> Result<(CorpusConfig, Dataset)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::format("dataset", "bad magic"));
    }
    let version = read_u32(r)?;
    if version != DATASET_VERSION {
        return Err(Error::format("dataset", format!("unsupported version {version}")));
    }
    let header =
        String::from_utf8(read_bytes(r)?).map_err(|_| Error::format("dataset", "header is not UTF-8"))?;
    let doc = KvDocument::parse(&header)?;
    let mut cfg = CorpusConfig::default();
    let mut role = None;
    for (k, v) in doc.entries() {
        match k.strip_prefix("corpus.") {
            Some(key) => cfg.set(key, v)?,
            None if k == "role" => role = Some(Role::parse(v)?),
            None => return Err(Error::format("dataset", format!("unexpected header key {k}"))),
        }
    }
    let role = role.ok_or_else(|| Error::format("dataset", "header lacks a role"))?;
    let count = read_u64(r)? as usize;
    let mut utterances = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let id = String::from_utf8(read_bytes(r)?).map_err(|_| Error::format("dataset", "id is not UTF-8"))?;
        let frames = read_u64(r)? as usize;
        let dim = read_u64(r)? as usize;
        if frames.saturating_mul(dim) > 1 << 26 {
            return Err(Error::format("dataset", format!("{id}: {frames} x {dim} features")));
        }
        let values = (0..frames * dim).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        let n = read_u64(r)? as usize;
        if n > 1 << 20 {
            return Err(Error::format("dataset", format!("{id}: {n} tokens")));
        }
        let tokens = (0..n)
            .map(|_| read_u64(r).map(|t| t as usize))
            .collect::<Result<Vec<_>>>()?;
        utterances.push(Utterance {
            features: FeatureMatrix::new(frames, dim, values)?,
            tokens: TokenSequence::new(tokens),
            id,
        });
    }
    Ok((cfg, Dataset { role, utterances }))
}

pub fn save_dataset(path: &Path, corpus: &CorpusConfig, data: &Dataset) -> Result<()> {
    let mut buf = Vec::new();
    write_dataset(&mut buf, corpus, data)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<(CorpusConfig, Dataset)> {
    let bytes = fs::read(path)?;
    read_dataset(&mut bytes.as_slice())
}
