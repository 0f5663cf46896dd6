use serde::{Deserialize, Serialize};

use super::loss::{batch_objective_graph, UnlabeledTerm};
use super::optim::{clip_global_norm, Adam};
use super::{SslMode, TrainConfig};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::{Tape, Tensor};
use crate::pseudolabel::{batch_labels, BatchLabels, PseudoLabeled};
use crate::seed::derive_named;
use crate::sequence::Utterance;

/// One mini-batch: labeled utterances and pseudo-labeled ones.
#[derive(Clone, Debug, Default)]
pub struct Batch<'a> {
    pub labeled: Vec<&'a Utterance>,
    pub unlabeled: Vec<&'a PseudoLabeled>,
}

impl Batch<'_> {
    pub fn len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn ids(&self) -> Vec<String> {
        self.labeled
            .iter()
            .map(|u| u.id.clone())
            .chain(self.unlabeled.iter().map(|p| p.id().to_string()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    /// Mean per-utterance loss of the labeled part.
    pub labeled_loss: Option<f64>,
    pub unlabeled_loss: Option<f64>,
    pub selected_fraction: Option<f64>,
    /// `(L_l + L_u) / |B|`.
    pub total_loss: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
    pub pt_fallbacks: usize,
}

/// Loss values and the gradient of the combined objective, in parameter
/// name order.
#[derive(Clone, Debug)]
pub struct BatchGradient {
    pub metrics: StepMetrics,
    pub grads: Vec<Tensor>,
}

/// Targets for the unlabeled part of `batch` under `cfg.ssl_mode`.
pub fn labels_for_batch(
    params: &ModelParams,
    batch: &Batch<'_>,
    cfg: &TrainConfig,
    teacher: Option<&ModelParams>,
    seed: u64,
) -> Result<BatchLabels> {
    if cfg.ssl_mode == SslMode::None || batch.unlabeled.is_empty() {
        return Ok(BatchLabels::default());
    }
    batch_labels(params, teacher, &batch.unlabeled, cfg, derive_named(seed, "labels", 0))
}

/// Gradient of the batch objective with the unlabeled targets given.
pub fn gradient_with_labels(
    params: &ModelParams,
    batch: &Batch<'_>,
    labels: &BatchLabels,
    cfg: &TrainConfig,
    seed: u64,
    step: usize,
) -> Result<BatchGradient> {
    let unlabeled: Vec<UnlabeledTerm<'_>> = if labels.labels.is_empty() {
        Vec::new()
    } else {
        batch
            .unlabeled
            .iter()
            .enumerate()
            .map(|(i, item)| UnlabeledTerm {
                id: item.id(),
                features: &item.utterance.features,
                history: &labels.histories[i],
                labels: &labels.labels[i],
                confidences: &labels.confidences[i],
            })
            .collect()
    };
    let mut tape = Tape::new();
    let bp = params.bind(&mut tape, true);
    let obj = batch_objective_graph(
        &mut tape,
        &bp,
        params.config(),
        &batch.labeled,
        &unlabeled,
        cfg,
        derive_named(seed, "labeled", 0),
        derive_named(seed, "unlabeled", 0),
    )?;
    let total_loss = tape.value(obj.total).item();
    if !total_loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            step,
            utterances: batch.ids(),
        });
    }
    let mean = |vars: &[crate::numerics::Var]| {
        (!vars.is_empty()).then(|| vars.iter().map(|&v| tape.value(v).item()).sum::<f64>() / vars.len() as f64)
    };
    let labeled_loss = mean(&obj.labeled);
    let unlabeled_loss = mean(&obj.unlabeled);
    let selected_fraction =
        (obj.total_tokens > 0).then(|| obj.selected_tokens as f64 / obj.total_tokens as f64);
    let mut g = tape.backward(obj.total)?;
    let grads = bp
        .named
        .iter()
        .map(|(_, v)| g.take(*v).expect("parameter leaves receive gradients"))
        .collect();
    Ok(BatchGradient {
        metrics: StepMetrics {
            step,
            labeled_loss,
            unlabeled_loss,
            selected_fraction,
            total_loss,
            grad_norm: 0.0,
            pt_fallbacks: labels.fallbacks,
        },
        grads,
    })
}

/// One optimizer update on `batch`.
///
/// Unlabeled targets are produced first, from the parameters as they are
/// before the update, and enter the loss as constants.
pub fn train_step(
    params: &mut ModelParams,
    batch: &Batch<'_>,
    cfg: &TrainConfig,
    teacher: Option<&ModelParams>,
    optimizer: &mut Adam,
    seed: u64,
    step: usize,
) -> Result<StepMetrics> {
    let labels = labels_for_batch(params, batch, cfg, teacher, seed)?;
    let effective = if labels.labels.is_empty() {
        Batch {
            labeled: batch.labeled.clone(),
            unlabeled: Vec::new(),
        }
    } else {
        batch.clone()
    };
    let BatchGradient { mut metrics, mut grads } = gradient_with_labels(params, &effective, &labels, cfg, seed, step)?;
    metrics.grad_norm = clip_global_norm(&mut grads, cfg.grad_clip);
    optimizer.update(params, &grads)?;
    Ok(metrics)
}
