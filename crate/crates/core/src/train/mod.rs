//! Losses, optimization and the training loop.
//!
//! The batch objective is `(L_l + L_u) / |B|` where each part sums the
//! per-utterance token cross-entropies. Labeled targets are smoothed one-hots.
//! Unlabeled targets come from [`crate::pseudolabel`] and enter the loss only
//! at positions whose confidence reaches the threshold, while the decoder is
//! always teacher-forced on the full pseudo-transcription.

mod config;
mod fit;
mod loss;
mod optim;
mod step;

pub use config::{LabelKind, PtNoise, SslMode, TrainConfig};
pub use fit::{early_stop, fit, EarlyStop, FitOutcome, MetricsRecord, StopDecision, TrainData};
pub use loss::{
    batch_objective_graph, smooth_labels, supervised_loss, unlabeled_loss, ObjectiveVars, UnlabeledLoss,
    UnlabeledTerm,
};
pub use optim::{clip_global_norm, Adam};
pub use step::{gradient_with_labels, labels_for_batch, train_step, Batch, BatchGradient, StepMetrics};
