use serde::{Deserialize, Serialize};

use crate::augment::{preset, AugmentPolicy};
use crate::config::{parse_f64, parse_u64, parse_usize};
use crate::error::{Error, Result};

/// How the unlabeled half of each batch gets its targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SslMode {
    /// Labeled data only.
    None,
    /// Stored pseudo-transcriptions as fixed hard targets.
    PtFixed,
    /// Targets from the current model on weakly perturbed input.
    FixMatch,
    /// Targets from a frozen teacher.
    NoisyStudent,
    /// Pseudo-transcriptions re-decoded by the current model every batch.
    IterativeSelfTraining,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelKind {
    Hard,
    Soft,
}

/// Perturbation applied to a teacher's label pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PtNoise {
    None,
    Dropout,
    WeakSa,
}

impl SslMode {
    pub fn name(self) -> &'static str {
        match self {
            SslMode::None => "none",
            SslMode::PtFixed => "pt-fixed",
            SslMode::FixMatch => "fixmatch",
            SslMode::NoisyStudent => "noisy-student",
            SslMode::IterativeSelfTraining => "iterative-self-training",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "none" | "supervised" => SslMode::None,
            "pt-fixed" => SslMode::PtFixed,
            "fixmatch" => SslMode::FixMatch,
            "noisy-student" => SslMode::NoisyStudent,
            "iterative-self-training" => SslMode::IterativeSelfTraining,
            other => return Err(Error::InvalidConfig(format!("unknown ssl mode `{other}`"))),
        })
    }

    /// Whether the mode reads pseudo-transcriptions of the unlabeled set.
    pub fn uses_unlabeled(self) -> bool {
        self != SslMode::None
    }
}

impl LabelKind {
    pub fn name(self) -> &'static str {
        match self {
            LabelKind::Hard => "hard",
            LabelKind::Soft => "soft",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(LabelKind::Hard),
            "soft" => Ok(LabelKind::Soft),
            other => Err(Error::InvalidConfig(format!("unknown label kind `{other}`"))),
        }
    }
}

impl PtNoise {
    pub fn name(self) -> &'static str {
        match self {
            PtNoise::None => "none",
            PtNoise::Dropout => "dropout",
            PtNoise::WeakSa => "weak-sa",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PtNoise::None),
            "dropout" => Ok(PtNoise::Dropout),
            "weak-sa" => Ok(PtNoise::WeakSa),
            other => Err(Error::InvalidConfig(format!("unknown pt noise `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Pseudo-label tokens with confidence below this are left out of the loss.
    pub confidence_threshold: f64,
    /// Probability of the target class in smoothed hard labels.
    pub label_smoothing: f64,
    /// Dropout rate for every training-time forward pass.
    pub dropout_p: f64,
    pub batch_size_labeled: usize,
    pub batch_size_unlabeled: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub labeled_augment: AugmentPolicy,
    pub unlabeled_augment: AugmentPolicy,
    /// Perturbation for on-the-fly label passes: FixMatch's weak
    /// augmentation and the teacher's `weak-sa` noise.
    pub label_augment: AugmentPolicy,
    pub ssl_mode: SslMode,
    pub pt_label_kind: LabelKind,
    pub pt_noise: PtNoise,
    /// Global gradient-norm cap.
    pub grad_clip: f64,
    pub iterative_beam_width: usize,
    /// Beam width for the per-epoch validation decode.
    pub validation_beam_width: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let dim = crate::model::ModelConfig::default().feature_dim;
        Self {
            confidence_threshold: 0.0,
            label_smoothing: 0.9,
            dropout_p: 0.3,
            batch_size_labeled: 16,
            batch_size_unlabeled: 16,
            learning_rate: 2e-3,
            max_epochs: 30,
            early_stop_patience: 3,
            labeled_augment: preset("strong", dim).expect("builtin preset"),
            unlabeled_augment: preset("strong", dim).expect("builtin preset"),
            label_augment: preset("weak", dim).expect("builtin preset"),
            ssl_mode: SslMode::None,
            pt_label_kind: LabelKind::Hard,
            pt_noise: PtNoise::None,
            grad_clip: 5.0,
            iterative_beam_width: 4,
            validation_beam_width: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return bad("confidence_threshold must lie in [0, 1]");
        }
        if !(self.label_smoothing > 0.0 && self.label_smoothing <= 1.0) {
            return bad("label_smoothing must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout_p must lie in [0, 1)");
        }
        if self.batch_size_labeled == 0 && self.batch_size_unlabeled == 0 {
            return bad("at least one batch size must be positive");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        if self.max_epochs == 0 || self.early_stop_patience == 0 {
            return bad("max_epochs and early_stop_patience must be positive");
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return bad("grad_clip must be positive");
        }
        if self.iterative_beam_width == 0 || self.validation_beam_width == 0 {
            return bad("beam widths must be positive");
        }
        Ok(())
    }

    pub fn to_kv(&self, prefix: &str) -> Vec<(String, String)> {
        let k = |s: &str| format!("{prefix}{s}");
        vec![
            (k("confidence_threshold"), format!("{:?}", self.confidence_threshold)),
            (k("label_smoothing"), format!("{:?}", self.label_smoothing)),
            (k("dropout_p"), format!("{:?}", self.dropout_p)),
            (k("batch_size_labeled"), self.batch_size_labeled.to_string()),
            (k("batch_size_unlabeled"), self.batch_size_unlabeled.to_string()),
            (k("learning_rate"), format!("{:?}", self.learning_rate)),
            (k("max_epochs"), self.max_epochs.to_string()),
            (k("early_stop_patience"), self.early_stop_patience.to_string()),
            (k("labeled_augment"), self.labeled_augment.to_string()),
            (k("unlabeled_augment"), self.unlabeled_augment.to_string()),
            (k("label_augment"), self.label_augment.to_string()),
            (k("ssl_mode"), self.ssl_mode.name().into()),
            (k("pt_label_kind"), self.pt_label_kind.name().into()),
            (k("pt_noise"), self.pt_noise.name().into()),
            (k("grad_clip"), format!("{:?}", self.grad_clip)),
            (k("iterative_beam_width"), self.iterative_beam_width.to_string()),
            (k("validation_beam_width"), self.validation_beam_width.to_string()),
            (k("seed"), self.seed.to_string()),
        ]
    }

    /// Apply one setting. Augmentation values may be preset names, resolved
    /// against `feature_dim`.
    pub fn set(&mut self, key: &str, value: &str, feature_dim: usize) -> Result<()> {
        match key {
            "confidence_threshold" => self.confidence_threshold = parse_f64(key, value)?,
            "label_smoothing" => self.label_smoothing = parse_f64(key, value)?,
            "dropout_p" => self.dropout_p = parse_f64(key, value)?,
            "batch_size_labeled" => self.batch_size_labeled = parse_usize(key, value)?,
            "batch_size_unlabeled" => self.batch_size_unlabeled = parse_usize(key, value)?,
            "learning_rate" => self.learning_rate = parse_f64(key, value)?,
            "max_epochs" => self.max_epochs = parse_usize(key, value)?,
            "early_stop_patience" => self.early_stop_patience = parse_usize(key, value)?,
            "labeled_augment" => self.labeled_augment = AugmentPolicy::parse(value, feature_dim)?,
            "unlabeled_augment" => self.unlabeled_augment = AugmentPolicy::parse(value, feature_dim)?,
            "label_augment" => self.label_augment = AugmentPolicy::parse(value, feature_dim)?,
            "ssl_mode" => self.ssl_mode = SslMode::parse(value)?,
            "pt_label_kind" => self.pt_label_kind = LabelKind::parse(value)?,
            "pt_noise" => self.pt_noise = PtNoise::parse(value)?,
            "grad_clip" => self.grad_clip = parse_f64(key, value)?,
            "iterative_beam_width" => self.iterative_beam_width = parse_usize(key, value)?,
            "validation_beam_width" => self.validation_beam_width = parse_usize(key, value)?,
            "seed" => self.seed = parse_u64(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown train key `{other}`"))),
        }
        Ok(())
    }
}
