use super::{LabelMatrix, LoopFilter, PTRecord, PseudoLabeled, PtSource};
use crate::augment::{spec_augment, AugmentPolicy};
use crate::decode::{best_hypothesis, BeamConfig};
use crate::error::{Error, Result};
use crate::model::{forward_teacher_forced, Dropout, ModelParams};
use crate::seed::derive_named;
use crate::sequence::{FeatureMatrix, TokenSequence, UnlabeledUtterance};
use crate::train::{LabelKind, PtNoise, SslMode, TrainConfig};

/// Result of an offline generation pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PtGeneration {
    pub records: Vec<PTRecord>,
    /// Ids dropped by the loop filter.
    pub loop_rejected: Vec<String>,
    /// Ids with no finished hypothesis.
    pub decode_failed: Vec<String>,
}

/// Best beam transcription of clean input, with confidences taken from a
/// clean teacher-forced pass over it. `None` if decoding fails.
pub fn transcribe_for_pt(
    params: &ModelParams,
    features: &FeatureMatrix,
    beam: &BeamConfig,
) -> Result<Option<(TokenSequence, Vec<f64>)>> {
    let Some(best) = best_hypothesis(params, features, beam)? else {
        return Ok(None);
    };
    let post = forward_teacher_forced(params, features, &best.tokens, &mut Dropout::Off)?;
    let conf = best
        .tokens
        .tokens()
        .iter()
        .enumerate()
        .map(|(j, &t)| post.row_slice(j)[t].clamp(0.0, 1.0))
        .collect();
    Ok(Some((best.tokens, conf)))
}

/// Decode every utterance once, without augmentation or dropout.
pub fn generate_pt_offline(
    params: &ModelParams,
    dataset: &[UnlabeledUtterance],
    beam: &BeamConfig,
    filter: &LoopFilter,
) -> Result<PtGeneration> {
    beam.validate()?;
    let model_id = params.model_id();
    let mut out = PtGeneration::default();
    for utt in dataset {
        let Some((tokens, conf)) =
            transcribe_for_pt(params, &utt.features, beam).map_err(|e| e.with_utterance(&utt.id))?
        else {
            out.decode_failed.push(utt.id.clone());
            continue;
        };
        if filter.rejects(tokens.content()) {
            out.loop_rejected.push(utt.id.clone());
            continue;
        }
        out.records
            .push(PTRecord::new(&utt.id, tokens, conf, PtSource::OfflineBeam, &model_id)?.quantized());
    }
    Ok(out)
}

fn dropout_for(p: f64, seed: u64) -> Dropout {
    if p > 0.0 {
        Dropout::on(p, derive_named(seed, "label-dropout", 0))
    } else {
        Dropout::Off
    }
}

fn check_pt(pt: &PTRecord) -> Result<()> {
    if pt.tokens.is_empty() {
        return Err(Error::LengthMismatch {
            id: pt.utterance_id.clone(),
            what: "empty pseudo-transcription".into(),
        });
    }
    Ok(())
}

/// FixMatch targets: one teacher-forced pass of the current model over the
/// weakly augmented input, conditioned on the stored transcription.
pub fn fixmatch_labels(
    params: &ModelParams,
    features: &FeatureMatrix,
    pt: &PTRecord,
    weak: &AugmentPolicy,
    kind: LabelKind,
    dropout_p: f64,
    seed: u64,
) -> Result<(LabelMatrix, Vec<f64>)> {
    check_pt(pt)?;
    let x = spec_augment(features, weak, derive_named(seed, "label-augment", 0));
    let post = forward_teacher_forced(params, &x, &pt.tokens, &mut dropout_for(dropout_p, seed))
        .map_err(|e| e.with_utterance(&pt.utterance_id))?;
    LabelMatrix::from_posteriors(post, kind)
}

/// Noisy Student targets from a frozen teacher.
///
/// Hard labels without noise are the stored transcription itself. Every
/// other combination runs the teacher over the input perturbed per `noise`.
#[allow(clippy::too_many_arguments)]
pub fn noisy_student_labels(
    teacher: &ModelParams,
    features: &FeatureMatrix,
    pt: &PTRecord,
    kind: LabelKind,
    noise: PtNoise,
    weak: &AugmentPolicy,
    dropout_p: f64,
    seed: u64,
) -> Result<(LabelMatrix, Vec<f64>)> {
    check_pt(pt)?;
    let vocab = teacher.config().vocab_size;
    if kind == LabelKind::Hard && noise == PtNoise::None {
        return Ok((LabelMatrix::one_hot(pt.tokens.tokens(), vocab)?, pt.confidences.clone()));
    }
    let (x, mut dropout) = match noise {
        PtNoise::None => (features.clone(), Dropout::Off),
        PtNoise::Dropout => (features.clone(), dropout_for(dropout_p, seed)),
        PtNoise::WeakSa => (
            spec_augment(features, weak, derive_named(seed, "label-augment", 0)),
            Dropout::Off,
        ),
    };
    let post = forward_teacher_forced(teacher, &x, &pt.tokens, &mut dropout)
        .map_err(|e| e.with_utterance(&pt.utterance_id))?;
    LabelMatrix::from_posteriors(post, kind)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterativeLabel {
    pub record: PTRecord,
    /// True when decoding failed or was loop-filtered and `previous` was kept.
    pub fell_back: bool,
}

/// Fresh transcription of clean input by the current model.
pub fn iterative_self_train_labels(
    params: &ModelParams,
    features: &FeatureMatrix,
    previous: &PTRecord,
    beam_width: usize,
) -> Result<IterativeLabel> {
    let beam = BeamConfig {
        beam_width,
        ..BeamConfig::default()
    };
    beam.validate()?;
    let fresh = transcribe_for_pt(params, features, &beam).map_err(|e| e.with_utterance(&previous.utterance_id))?;
    match fresh {
        Some((tokens, conf)) if !LoopFilter::default().rejects(tokens.content()) => Ok(IterativeLabel {
            record: PTRecord::new(
                &previous.utterance_id,
                tokens,
                conf,
                PtSource::Iterative,
                params.model_id(),
            )?,
            fell_back: false,
        }),
        _ => Ok(IterativeLabel {
            record: previous.clone(),
            fell_back: true,
        }),
    }
}

/// Targets for the unlabeled half of a batch.
#[derive(Clone, Debug, Default)]
pub struct BatchLabels {
    /// Teacher-forcing history per utterance.
    pub histories: Vec<TokenSequence>,
    pub labels: Vec<LabelMatrix>,
    pub confidences: Vec<Vec<f64>>,
    /// Utterances whose re-decoding fell back to the stored transcription.
    pub fallbacks: usize,
}

/// Produce targets for `items` according to `cfg.ssl_mode`. Labels are plain
/// values; no gradient flows through them.
pub fn batch_labels(
    current: &ModelParams,
    teacher: Option<&ModelParams>,
    items: &[&PseudoLabeled],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<BatchLabels> {
    let vocab = current.config().vocab_size;
    let mut out = BatchLabels::default();
    for (i, item) in items.iter().enumerate() {
        let s = derive_named(seed, "label", i as u64);
        let x = &item.utterance.features;
        let (history, (labels, conf)) = match cfg.ssl_mode {
            SslMode::None => {
                return Err(Error::InvalidConfig("ssl mode `none` takes no unlabeled data".into()));
            }
            SslMode::PtFixed => (
                item.pt.tokens.clone(),
                (LabelMatrix::one_hot(item.pt.tokens.tokens(), vocab)?, item.pt.confidences.clone()),
            ),
            SslMode::FixMatch => (
                item.pt.tokens.clone(),
                fixmatch_labels(current, x, &item.pt, &cfg.label_augment, cfg.pt_label_kind, cfg.dropout_p, s)?,
            ),
            SslMode::NoisyStudent => {
                let teacher = teacher.ok_or_else(|| {
                    Error::MissingInput("noisy-student training needs a teacher model".into())
                })?;
                (
                    item.pt.tokens.clone(),
                    noisy_student_labels(
                        teacher,
                        x,
                        &item.pt,
                        cfg.pt_label_kind,
                        cfg.pt_noise,
                        &cfg.label_augment,
                        cfg.dropout_p,
                        s,
                    )?,
                )
            }
            SslMode::IterativeSelfTraining => {
                let fresh = iterative_self_train_labels(current, x, &item.pt, cfg.iterative_beam_width)?;
                out.fallbacks += usize::from(fresh.fell_back);
                let r = fresh.record;
                let m = LabelMatrix::one_hot(r.tokens.tokens(), vocab)?;
                (r.tokens, (m, r.confidences))
            }
        };
        out.histories.push(history);
        out.labels.push(labels);
        out.confidences.push(conf);
    }
    Ok(out)
}
