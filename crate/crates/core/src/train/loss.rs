use crate::augment::spec_augment;
use crate::error::{Error, Result};
use crate::model::{encode_graph, teacher_forced_graph, BoundParams, Dropout, ModelConfig, ModelParams};
use crate::numerics::{Tape, Tensor, Var};
use crate::pseudolabel::{argmax_row, LabelMatrix, PseudoLabeled};
use crate::seed::derive_named;
use crate::sequence::{FeatureMatrix, TokenSequence, Utterance};

use super::{LabelKind, TrainConfig};

/// Hard target with `target_prob` on `token` and the rest spread evenly.
pub fn smooth_labels(token: usize, vocab: usize, target_prob: f64) -> Vec<f64> {
    assert!(vocab >= 2 && token < vocab, "token {token} with vocabulary {vocab}");
    let rest = (1.0 - target_prob) / (vocab - 1) as f64;
    let mut row = vec![rest; vocab];
    row[token] = target_prob;
    row
}

fn smoothed_rows(tokens: &[usize], vocab: usize, target_prob: f64) -> Vec<f64> {
    tokens
        .iter()
        .flat_map(|&t| smooth_labels(t, vocab, target_prob))
        .collect()
}

/// An unlabeled utterance with detached targets, ready for the loss.
#[derive(Clone, Copy, Debug)]
pub struct UnlabeledTerm<'a> {
    pub id: &'a str,
    pub features: &'a FeatureMatrix,
    /// Teacher-forcing history (the pseudo-transcription).
    pub history: &'a TokenSequence,
    pub labels: &'a LabelMatrix,
    pub confidences: &'a [f64],
}

/// Graph handles of a batch objective.
#[derive(Clone, Debug)]
pub struct ObjectiveVars {
    /// `(L_l + L_u) / |B|`.
    pub total: Var,
    /// Per-utterance summed CE of the labeled part.
    pub labeled: Vec<Var>,
    pub unlabeled: Vec<Var>,
    pub selected_tokens: usize,
    pub total_tokens: usize,
}

/// Summed token CE `-sum_j sum_k t_jk log p_jk` for one utterance.
fn utterance_ce(
    tape: &mut Tape,
    bp: &BoundParams,
    mcfg: &ModelConfig,
    features: &FeatureMatrix,
    history: &TokenSequence,
    targets: Tensor,
    dropout: &mut Dropout,
) -> Result<Var> {
    let enc = encode_graph(tape, bp, mcfg, features, dropout)?;
    let rows = teacher_forced_graph(tape, bp, mcfg, &enc, history, dropout)?;
    let logits = tape.concat(&rows, 0);
    let logp = tape.log_softmax(logits);
    let t = tape.constant(targets);
    let weighted = tape.mul(logp, t);
    let total = tape.sum(weighted);
    Ok(tape.scale(total, -1.0))
}

fn branch_inputs(cfg: &TrainConfig, seed: u64, i: usize, x: &FeatureMatrix, unlabeled: bool) -> (FeatureMatrix, Dropout) {
    let policy = if unlabeled { &cfg.unlabeled_augment } else { &cfg.labeled_augment };
    let xa = spec_augment(x, policy, derive_named(seed, "augment", i as u64));
    (xa, Dropout::on(cfg.dropout_p, derive_named(seed, "dropout", i as u64)))
}

pub(crate) fn labeled_terms(
    tape: &mut Tape,
    bp: &BoundParams,
    mcfg: &ModelConfig,
    batch: &[&Utterance],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<Var>> {
    let vocab = mcfg.vocab_size;
    batch
        .iter()
        .enumerate()
        .map(|(i, u)| {
            u.tokens.validate(vocab).map_err(|e| e.with_utterance(&u.id))?;
            let (x, mut dropout) = branch_inputs(cfg, seed, i, &u.features, false);
            let targets = Tensor::matrix(u.tokens.len(), vocab, smoothed_rows(u.tokens.tokens(), vocab, cfg.label_smoothing))?;
            utterance_ce(tape, bp, mcfg, &x, &u.tokens, targets, &mut dropout).map_err(|e| e.with_utterance(&u.id))
        })
        .collect()
}

/// Target rows for one pseudo-labeled utterance and its selected-token count.
fn gated_targets(term: &UnlabeledTerm<'_>, vocab: usize, cfg: &TrainConfig) -> Result<(Tensor, usize)> {
    let n = term.history.len();
    if term.labels.len() != n || term.confidences.len() != n || term.labels.vocab() != vocab {
        return Err(Error::LengthMismatch {
            id: term.id.to_string(),
            what: format!(
                "{} label rows of width {} and {} confidences for {} pseudo-label tokens (vocabulary {vocab})",
                term.labels.len(),
                term.labels.vocab(),
                term.confidences.len(),
                n
            ),
        });
    }
    let mut data = vec![0.0; n * vocab];
    let mut selected = 0;
    for j in 0..n {
        if term.confidences[j] < cfg.confidence_threshold {
            continue;
        }
        selected += 1;
        let row = &mut data[j * vocab..(j + 1) * vocab];
        match term.labels.kind() {
            LabelKind::Hard => {
                row.copy_from_slice(&smooth_labels(argmax_row(term.labels.row(j)), vocab, cfg.label_smoothing))
            }
            LabelKind::Soft => row.copy_from_slice(term.labels.row(j)),
        }
    }
    Ok((Tensor::matrix(n, vocab, data)?, selected))
}

pub(crate) fn unlabeled_terms(
    tape: &mut Tape,
    bp: &BoundParams,
    mcfg: &ModelConfig,
    batch: &[UnlabeledTerm<'_>],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Vec<Var>, usize, usize)> {
    let (mut selected, mut total) = (0, 0);
    let mut terms = Vec::with_capacity(batch.len());
    for (i, term) in batch.iter().enumerate() {
        term.history.validate(mcfg.vocab_size).map_err(|e| e.with_utterance(term.id))?;
        let (targets, sel) = gated_targets(term, mcfg.vocab_size, cfg)?;
        selected += sel;
        total += term.history.len();
        let (x, mut dropout) = branch_inputs(cfg, seed, i, term.features, true);
        terms.push(
            utterance_ce(tape, bp, mcfg, &x, term.history, targets, &mut dropout).map_err(|e| e.with_utterance(term.id))?,
        );
    }
    Ok((terms, selected, total))
}

/// Build `(L_l + L_u) / |B|` on `tape`. The labeled part uses stream
/// `labeled_seed`, the unlabeled part `unlabeled_seed`.
#[allow(clippy::too_many_arguments)]
pub fn batch_objective_graph(
    tape: &mut Tape,
    bp: &BoundParams,
    mcfg: &ModelConfig,
    labeled: &[&Utterance],
    unlabeled: &[UnlabeledTerm<'_>],
    cfg: &TrainConfig,
    labeled_seed: u64,
    unlabeled_seed: u64,
) -> Result<ObjectiveVars> {
    let n = labeled.len() + unlabeled.len();
    if n == 0 {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let l = labeled_terms(tape, bp, mcfg, labeled, cfg, labeled_seed)?;
    let (u, selected_tokens, total_tokens) = unlabeled_terms(tape, bp, mcfg, unlabeled, cfg, unlabeled_seed)?;
    let mut acc = None;
    for &v in l.iter().chain(&u) {
        acc = Some(match acc {
            None => v,
            Some(a) => tape.add(a, v),
        });
    }
    let total = tape.scale(acc.expect("non-empty batch"), 1.0 / n as f64);
    Ok(ObjectiveVars {
        total,
        labeled: l,
        unlabeled: u,
        selected_tokens,
        total_tokens,
    })
}

fn mean_of(tape: &Tape, vars: &[Var]) -> f64 {
    vars.iter().map(|&v| tape.value(v).item()).sum::<f64>() / vars.len() as f64
}

/// Mean over utterances of summed token CE against smoothed transcriptions,
/// on augmented input with dropout.
pub fn supervised_loss(params: &ModelParams, batch_l: &[Utterance], cfg: &TrainConfig, seed: u64) -> Result<f64> {
    if batch_l.is_empty() {
        return Err(Error::InvalidConfig("empty labeled batch".into()));
    }
    let mut tape = Tape::new();
    let bp = params.bind(&mut tape, false);
    let refs: Vec<&Utterance> = batch_l.iter().collect();
    let terms = labeled_terms(&mut tape, &bp, params.config(), &refs, cfg, seed)?;
    Ok(mean_of(&tape, &terms))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnlabeledLoss {
    pub loss: f64,
    pub selected_fraction: f64,
    pub selected_tokens: usize,
    pub total_tokens: usize,
}

/// Mean over utterances of confidence-gated token CE against `labels`,
/// teacher-forced on each stored pseudo-transcription.
pub fn unlabeled_loss(
    params: &ModelParams,
    batch_u: &[PseudoLabeled],
    labels: &[LabelMatrix],
    confidences: &[Vec<f64>],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<UnlabeledLoss> {
    if batch_u.is_empty() {
        return Err(Error::InvalidConfig("empty unlabeled batch".into()));
    }
    if labels.len() != batch_u.len() || confidences.len() != batch_u.len() {
        return Err(Error::InvalidConfig(format!(
            "{} utterances but {} label matrices and {} confidence lists",
            batch_u.len(),
            labels.len(),
            confidences.len()
        )));
    }
    let terms: Vec<UnlabeledTerm<'_>> = batch_u
        .iter()
        .zip(labels)
        .zip(confidences)
        .map(|((item, labels), conf)| UnlabeledTerm {
            id: item.id(),
            features: &item.utterance.features,
            history: &item.pt.tokens,
            labels,
            confidences: conf,
        })
        .collect();
    let mut tape = Tape::new();
    let bp = params.bind(&mut tape, false);
    let (vars, selected, total) = unlabeled_terms(&mut tape, &bp, params.config(), &terms, cfg, seed)?;
    Ok(UnlabeledLoss {
        loss: mean_of(&tape, &vars),
        selected_fraction: if total == 0 { 0.0 } else { selected as f64 / total as f64 },
        selected_tokens: selected,
        total_tokens: total,
    })
}
