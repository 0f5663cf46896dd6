use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::Adam;
use super::step::{train_step, Batch};
use super::TrainConfig;
use crate::decode::{score_dataset, BeamConfig};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::pseudolabel::PseudoLabeled;
use crate::seed::derive_named;
use crate::sequence::Utterance;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EarlyStop {
    pub decision: StopDecision,
    /// 1-based epoch with the lowest WER; ties go to the earliest.
    pub best_epoch: usize,
}

/// Stop once `patience` epochs have passed, counting the best one, without
/// a lower validation WER.
pub fn early_stop(history: &[f64], patience: usize) -> Result<EarlyStop> {
    if history.is_empty() {
        return Err(Error::InvalidConfig("early stopping needs at least one epoch".into()));
    }
    let best = history
        .iter()
        .enumerate()
        .fold(0, |b, (i, &w)| if w < history[b] { i } else { b });
    let decision = if history.len() - best >= patience {
        StopDecision::Stop
    } else {
        StopDecision::Continue
    };
    Ok(EarlyStop {
        decision,
        best_epoch: best + 1,
    })
}

/// Training inputs. Unlabeled utterances carry only features and their
/// pseudo-transcriptions.
#[derive(Clone, Copy, Debug)]
pub struct TrainData<'a> {
    pub labeled: &'a [Utterance],
    pub unlabeled: &'a [PseudoLabeled],
    /// Held-out utterances for early stopping.
    pub validation: &'a [Utterance],
}

/// One line of the metrics log.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub epoch: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub labeled_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub unlabeled_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub selected_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub validation_wer: Option<f64>,
    #[serde(skip_serializing_if = "is_zero", default)]
    pub pt_fallbacks: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    /// Parameters of the best validation epoch (the last epoch when there is
    /// no validation set).
    pub params: ModelParams,
    /// 1-based, like the epochs in the metrics log.
    pub best_epoch: usize,
    pub validation_wer: Vec<f64>,
    pub steps: usize,
    pub early_stopped: bool,
}

/// Endless reshuffled passes over `0..n`.
struct Cycler {
    order: Vec<usize>,
    pos: usize,
    pass: u64,
    seed: u64,
}

impl Cycler {
    fn new(n: usize, seed: u64) -> Self {
        let mut c = Self {
            order: (0..n).collect(),
            pos: 0,
            pass: 0,
            seed,
        };
        c.shuffle();
        c
    }

    fn shuffle(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_named(self.seed, "pass", self.pass));
        self.order.shuffle(&mut rng);
    }

    fn take(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k.min(self.order.len()) {
            if self.pos == self.order.len() {
                self.pass += 1;
                self.pos = 0;
                self.shuffle();
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn steps_per_epoch(data: &TrainData<'_>, cfg: &TrainConfig) -> usize {
    let per = |n: usize, b: usize| if n == 0 || b == 0 { 0 } else { n.div_ceil(b) };
    let l = per(data.labeled.len(), cfg.batch_size_labeled);
    let u = if cfg.ssl_mode.uses_unlabeled() {
        per(data.unlabeled.len(), cfg.batch_size_unlabeled)
    } else {
        0
    };
    l.max(u)
}

/// Train from `init` until early stopping or `cfg.max_epochs`.
///
/// Each epoch runs enough steps to pass once over the larger of the two
/// parts; the smaller one is cycled.
pub fn fit(
    init: ModelParams,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    teacher: Option<&ModelParams>,
    log: &mut dyn FnMut(&MetricsRecord) -> Result<()>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if cfg.ssl_mode.uses_unlabeled() && data.unlabeled.is_empty() {
        return Err(Error::MissingInput(format!(
            "ssl mode `{}` needs pseudo-labeled utterances",
            cfg.ssl_mode.name()
        )));
    }
    let steps = steps_per_epoch(data, cfg);
    if steps == 0 {
        return Err(Error::MissingInput("no training utterances".into()));
    }
    let beam = BeamConfig {
        beam_width: cfg.validation_beam_width,
        ..BeamConfig::default()
    };
    let mut params = init;
    let mut best = params.clone();
    let mut optimizer = Adam::new(&params, cfg.learning_rate);
    let mut labeled = Cycler::new(data.labeled.len(), derive_named(cfg.seed, "shuffle-labeled", 0));
    let mut unlabeled = Cycler::new(data.unlabeled.len(), derive_named(cfg.seed, "shuffle-unlabeled", 0));
    let mut history = Vec::new();
    let mut step = 0;
    let mut best_epoch = 0;
    let mut early_stopped = false;

    for epoch in 1..=cfg.max_epochs {
        for _ in 0..steps {
            let mut batch = Batch::default();
            batch.labeled = labeled
                .take(cfg.batch_size_labeled)
                .into_iter()
                .map(|i| &data.labeled[i])
                .collect();
            if cfg.ssl_mode.uses_unlabeled() {
                batch.unlabeled = unlabeled
                    .take(cfg.batch_size_unlabeled)
                    .into_iter()
                    .map(|i| &data.unlabeled[i])
                    .collect();
            }
            let seed = derive_named(cfg.seed, "step", step as u64);
            let m = train_step(&mut params, &batch, cfg, teacher, &mut optimizer, seed, step)?;
            step += 1;
            log(&MetricsRecord {
                step,
                epoch,
                labeled_loss: m.labeled_loss,
                unlabeled_loss: m.unlabeled_loss,
                selected_fraction: m.selected_fraction,
                validation_wer: None,
                pt_fallbacks: m.pt_fallbacks,
            })?;
        }
        if data.validation.is_empty() {
            best = params.clone();
            best_epoch = epoch;
            continue;
        }
        let wer = score_dataset(&params, data.validation, &beam)?.wer;
        history.push(wer);
        log(&MetricsRecord {
            step,
            epoch,
            validation_wer: Some(wer),
            ..MetricsRecord::default()
        })?;
        let verdict = early_stop(&history, cfg.early_stop_patience)?;
        if verdict.best_epoch == epoch {
            best = params.clone();
        }
        best_epoch = verdict.best_epoch;
        if verdict.decision == StopDecision::Stop {
            early_stopped = epoch < cfg.max_epochs;
            break;
        }
    }
    Ok(FitOutcome {
        params: best,
        best_epoch,
        validation_wer: history,
        steps: step,
        early_stopped,
    })
}
