//! Experiment configuration, the named recipes and the pipeline stages behind
//! the `seqssl` command-line tool.
//!
//! A run is described by one flat key-value document. Keys are grouped by
//! prefix: `corpus.*`, `split.*`, `model.*`, `train.*`, `beam.*`,
//! `filter.*` and `experiment.*`. A document may name a recipe with
//! `experiment.recipe`; the recipe is applied first and every other entry
//! overrides it.

mod stages;

use std::path::{Path, PathBuf};

pub use stages::{
    evaluate, generate_pt, initial_params, load_pt_store, make_data, train, with_quarantine, EvaluateResult,
    GeneratePtResult, TrainResult, QUARANTINE_DIR,
};

use crate::config::{parse_usize, KvDocument};
use crate::decode::BeamConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::pseudolabel::LoopFilter;
use crate::synthdata::{CorpusConfig, Role, SplitConfig};
use crate::train::TrainConfig;

/// Built-in recipes as `(name, document)`.
pub const RECIPES: &[(&str, &str)] = &[
    ("baseline-25", include_str!("../../recipes/baseline-25.conf")),
    ("oracle", include_str!("../../recipes/oracle.conf")),
    ("fixmatch-scratch", include_str!("../../recipes/fixmatch-scratch.conf")),
    ("fixmatch-init-gt", include_str!("../../recipes/fixmatch-init-gt.conf")),
    ("ns-hard", include_str!("../../recipes/ns-hard.conf")),
    ("ns-soft", include_str!("../../recipes/ns-soft.conf")),
    ("ns-soft-sa", include_str!("../../recipes/ns-soft-sa.conf")),
    ("ns-soft-dropout", include_str!("../../recipes/ns-soft-dropout.conf")),
    ("iterative-w4", include_str!("../../recipes/iterative-w4.conf")),
    ("ns-round2", include_str!("../../recipes/ns-round2.conf")),
];

/// Where the initial weights of a training run come from.
#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    /// Uniform initialization seeded from `train.seed`.
    Scratch,
    Checkpoint(PathBuf),
}

/// Everything that determines a run.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub recipe: String,
    pub corpus: CorpusConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub beam: BeamConfig,
    pub loop_filter: LoopFilter,
    pub output: PathBuf,
    /// Directory holding the dataset files; the output directory if unset.
    pub data_dir: Option<PathBuf>,
    pub init: Init,
    /// Teacher checkpoint for noisy-student training.
    pub teacher: Option<PathBuf>,
    /// Checkpoint decoded by `generate-pt` and scored by `evaluate`.
    pub checkpoint: Option<PathBuf>,
    /// Datasets trained on with their transcriptions. Listing an unlabeled
    /// tranche here gives the oracle endpoint.
    pub labeled: Vec<Role>,
    /// Unlabeled tranches used for training, in order.
    pub unlabeled: Vec<Role>,
    /// PT stores, one per entry of `unlabeled`. Defaults to
    /// `<data_dir>/pt-<tranche>.tsv`.
    pub pt_stores: Vec<PathBuf>,
    /// Tranche decoded by `generate-pt`.
    pub tranche: Role,
    /// Dataset scored by `evaluate`.
    pub dataset: Role,
    /// Earlier `evaluate` results to compute WERR and WRR against.
    pub baseline_result: Option<PathBuf>,
    pub oracle_result: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            recipe: "custom".into(),
            corpus: CorpusConfig::default(),
            split: SplitConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            beam: BeamConfig::default(),
            loop_filter: LoopFilter::default(),
            output: PathBuf::from("runs"),
            data_dir: None,
            init: Init::Scratch,
            teacher: None,
            checkpoint: None,
            labeled: vec![Role::Labeled],
            unlabeled: vec![Role::UnlabeledTranche1],
            pt_stores: Vec::new(),
            tranche: Role::UnlabeledTranche1,
            dataset: Role::Test,
            baseline_result: None,
            oracle_result: None,
        }
    }
}

fn path_or_none(v: &str) -> Option<PathBuf> {
    (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn show(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "none".into(), |p| p.display().to_string())
}

impl ExperimentConfig {
    /// Defaults with a built-in recipe applied.
    pub fn recipe(name: &str) -> Result<Self> {
        let text = RECIPES
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                let known: Vec<_> = RECIPES.iter().map(|(n, _)| *n).collect();
                Error::InvalidConfig(format!("unknown recipe `{name}` (known: {})", known.join(", ")))
            })?;
        let mut cfg = Self::default();
        cfg.apply(&KvDocument::parse(text)?)?;
        cfg.recipe = name.to_string();
        Ok(cfg)
    }

    /// Resolve a document: its recipe (if any), then its entries.
    pub fn from_document(doc: &KvDocument) -> Result<Self> {
        let mut cfg = match doc.get("experiment.recipe") {
            Some(name) if name != "custom" => Self::recipe(name)?,
            _ => Self::default(),
        };
        cfg.apply(doc)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_document(&KvDocument::parse(&std::fs::read_to_string(path)?)?)
    }

    /// Apply entries in order. Training keys are applied last so that
    /// augmentation presets resolve against the final feature width.
    pub fn apply(&mut self, doc: &KvDocument) -> Result<()> {
        let mut train_keys = Vec::new();
        for (k, v) in doc.entries() {
            if let Some(key) = k.strip_prefix("train.") {
                train_keys.push((key, v));
            } else {
                self.set(k, v)?;
            }
        }
        for (key, v) in train_keys {
            self.train.set(key, v, self.model.feature_dim)?;
        }
        Ok(())
    }

    /// Apply one fully qualified key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (section, rest) = key
            .split_once('.')
            .ok_or_else(|| Error::InvalidConfig(format!("key `{key}` has no section prefix")))?;
        match section {
            "corpus" => self.corpus.set(rest, value),
            "split" => self.split.set(rest, value),
            "model" => self.model.set(rest, value),
            "train" => self.train.set(rest, value, self.model.feature_dim),
            "beam" => self.beam.set(rest, value),
            "filter" => {
                match rest {
                    "n_max" => self.loop_filter.n_max = parse_usize(key, value)?,
                    "r_min" => self.loop_filter.r_min = parse_usize(key, value)?,
                    _ => return Err(Error::InvalidConfig(format!("unknown key `{key}`"))),
                }
                Ok(())
            }
            "experiment" => self.set_experiment(rest, value),
            _ => Err(Error::InvalidConfig(format!("unknown section in `{key}`"))),
        }
    }

    fn set_experiment(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "recipe" => self.recipe = value.to_string(),
            // Alias: the run seed is the training seed.
            "seed" => self.train.set("seed", value, self.model.feature_dim)?,
            "output" => self.output = PathBuf::from(value),
            "data_dir" => self.data_dir = path_or_none(value),
            "init" => {
                self.init = match value {
                    "scratch" => Init::Scratch,
                    path => Init::Checkpoint(PathBuf::from(path)),
                }
            }
            "teacher" => self.teacher = path_or_none(value),
            "checkpoint" => self.checkpoint = path_or_none(value),
            "labeled" => self.labeled = list(value).map(Role::parse).collect::<Result<_>>()?,
            "unlabeled" => self.unlabeled = list(value).map(Role::parse).collect::<Result<_>>()?,
            "pt_store" => self.pt_stores = list(value).map(PathBuf::from).collect(),
            "tranche" => self.tranche = Role::parse(value)?,
            "dataset" => self.dataset = Role::parse(value)?,
            "baseline" => self.baseline_result = path_or_none(value),
            "oracle" => self.oracle_result = path_or_none(value),
            other => return Err(Error::InvalidConfig(format!("unknown key `experiment.{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.split.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.beam.validate()?;
        if self.model.feature_dim != self.corpus.feature_dim {
            return Err(Error::InvalidConfig(format!(
                "model.feature_dim {} differs from corpus.feature_dim {}",
                self.model.feature_dim, self.corpus.feature_dim
            )));
        }
        if self.model.vocab_size != self.corpus.model_vocab_size() {
            return Err(Error::InvalidConfig(format!(
                "model.vocab_size {} must be corpus.vocab_size + 2 = {}",
                self.model.vocab_size,
                self.corpus.model_vocab_size()
            )));
        }
        if let Some(bad) = self.unlabeled.iter().find(|r| {
            !matches!(r, Role::UnlabeledTranche1 | Role::UnlabeledTranche2)
        }) {
            return Err(Error::InvalidConfig(format!(
                "experiment.unlabeled lists `{}`, which is not an unlabeled tranche",
                bad.name()
            )));
        }
        if self.labeled.is_empty() || self.labeled.iter().any(|r| matches!(r, Role::Test | Role::Validation)) {
            return Err(Error::InvalidConfig(
                "experiment.labeled must list training datasets only".into(),
            ));
        }
        if !self.pt_stores.is_empty() && self.pt_stores.len() != self.unlabeled.len() {
            return Err(Error::InvalidConfig(format!(
                "experiment.pt_store has {} paths for {} unlabeled tranches",
                self.pt_stores.len(),
                self.unlabeled.len()
            )));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn data_dir(&self) -> &Path {
        self.data_dir.as_deref().unwrap_or(&self.output)
    }

    pub fn dataset_path(&self, role: Role) -> PathBuf {
        self.data_dir().join(format!("{}.s2s", role.name()))
    }

    /// PT store for the `i`-th training tranche.
    pub fn pt_store_path(&self, i: usize) -> PathBuf {
        self.pt_stores
            .get(i)
            .cloned()
            .unwrap_or_else(|| self.data_dir().join(format!("pt-{}.tsv", self.unlabeled[i].name())))
    }

    /// Complete settings, enough to reproduce the run.
    pub fn to_document(&self) -> KvDocument {
        let mut doc = KvDocument::default();
        doc.push("experiment.recipe", self.recipe.clone());
        doc.push("experiment.output", self.output.display().to_string());
        doc.push("experiment.data_dir", show(&self.data_dir));
        doc.push(
            "experiment.init",
            match &self.init {
                Init::Scratch => "scratch".to_string(),
                Init::Checkpoint(p) => p.display().to_string(),
            },
        );
        doc.push("experiment.teacher", show(&self.teacher));
        doc.push("experiment.checkpoint", show(&self.checkpoint));
        let names = |roles: &[Role]| roles.iter().map(|r| r.name()).collect::<Vec<_>>().join(",");
        doc.push("experiment.labeled", names(&self.labeled));
        doc.push("experiment.unlabeled", names(&self.unlabeled));
        let stores: Vec<_> = self.pt_stores.iter().map(|p| p.display().to_string()).collect();
        doc.push("experiment.pt_store", stores.join(","));
        doc.push("experiment.tranche", self.tranche.name());
        doc.push("experiment.dataset", self.dataset.name());
        doc.push("experiment.baseline", show(&self.baseline_result));
        doc.push("experiment.oracle", show(&self.oracle_result));
        let sections = [
            self.corpus.to_kv("corpus."),
            self.split.to_kv("split."),
            self.model.to_kv("model."),
            self.train.to_kv("train."),
            self.beam.to_kv("beam."),
            vec![
                ("filter.n_max".into(), self.loop_filter.n_max.to_string()),
                ("filter.r_min".into(), self.loop_filter.r_min.to_string()),
            ],
        ];
        for (k, v) in sections.into_iter().flatten() {
            doc.push(k, v);
        }
        doc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_recipe_resolves_and_round_trips() {
        for (name, _) in RECIPES {
            let cfg = ExperimentConfig::recipe(name).unwrap();
            cfg.validate().unwrap();
            let again = ExperimentConfig::from_document(&cfg.to_document()).unwrap();
            assert_eq!(cfg, again, "{name}");
        }
    }

    #[test]
    fn later_entries_override_the_recipe() {
        let doc = KvDocument::parse(
            "experiment.recipe = ns-soft-sa\ntrain.confidence_threshold = 0.7\nexperiment.seed = 4\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::from_document(&doc).unwrap();
        assert_eq!(cfg.recipe, "ns-soft-sa");
        assert_eq!(cfg.train.confidence_threshold, 0.7);
        assert_eq!(cfg.seed(), 4);
        assert_eq!(cfg.train.pt_label_kind, crate::train::LabelKind::Soft);
    }

    #[test]
    fn augment_presets_follow_the_final_feature_width() {
        let doc = KvDocument::parse(
            "train.labeled_augment = strong\ncorpus.feature_dim = 80\nmodel.feature_dim = 80\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::from_document(&doc).unwrap();
        assert_eq!(cfg.train.labeled_augment, crate::augment::preset("strong", 80).unwrap());
    }

    #[test]
    fn mismatched_widths_and_unknown_keys_are_rejected() {
        let doc = KvDocument::parse("model.feature_dim = 12\n").unwrap();
        assert!(ExperimentConfig::from_document(&doc).is_err());
        let doc = KvDocument::parse("train.no_such_key = 1\n").unwrap();
        assert!(ExperimentConfig::from_document(&doc).is_err());
        let doc = KvDocument::parse("experiment.recipe = nope\n").unwrap();
        assert!(ExperimentConfig::from_document(&doc).is_err());
        let doc = KvDocument::parse("experiment.unlabeled = test\n").unwrap();
        assert!(ExperimentConfig::from_document(&doc).is_err());
    }
}
