//! Pseudo-transcriptions and the label paths built on them: offline beam
//! generation with loop filtering, FixMatch labels from the current model,
//! teacher labels for Noisy Student, and per-batch re-decoding.

mod labels;
mod rounds;
mod store;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::{TokenSequence, UnlabeledUtterance};

pub use labels::{
    batch_labels, fixmatch_labels, generate_pt_offline, iterative_self_train_labels, noisy_student_labels,
    transcribe_for_pt, BatchLabels, IterativeLabel, PtGeneration,
};
pub use rounds::{noisy_student_round, RoundData, RoundOutcome, RoundsOutcome, StudentInit};
pub use store::{read_pt_store, write_pt_store};

/// Where a pseudo-transcription came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PtSource {
    OfflineBeam,
    FixMatch,
    TeacherHard,
    TeacherSoft,
    Iterative,
}

impl PtSource {
    pub fn name(self) -> &'static str {
        match self {
            PtSource::OfflineBeam => "offline-beam",
            PtSource::FixMatch => "fixmatch",
            PtSource::TeacherHard => "teacher-hard",
            PtSource::TeacherSoft => "teacher-soft",
            PtSource::Iterative => "iterative",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "offline-beam" => PtSource::OfflineBeam,
            "fixmatch" => PtSource::FixMatch,
            "teacher-hard" => PtSource::TeacherHard,
            "teacher-soft" => PtSource::TeacherSoft,
            "iterative" => PtSource::Iterative,
            other => return Err(Error::format("pt store", format!("unknown source `{other}`"))),
        })
    }
}

impl fmt::Display for PtSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A pseudo-transcription with per-token confidences.
#[derive(Clone, Debug, PartialEq)]
pub struct PTRecord {
    pub utterance_id: String,
    pub tokens: TokenSequence,
    /// Posterior of each chosen token.
    pub confidences: Vec<f64>,
    pub source: PtSource,
    pub generator_model_id: String,
}

impl PTRecord {
    pub fn new(
        utterance_id: impl Into<String>,
        tokens: TokenSequence,
        confidences: Vec<f64>,
        source: PtSource,
        generator_model_id: impl Into<String>,
    ) -> Result<Self> {
        let utterance_id = utterance_id.into();
        if confidences.len() != tokens.len() {
            return Err(Error::LengthMismatch {
                id: utterance_id,
                what: format!("{} confidences for {} tokens", confidences.len(), tokens.len()),
            });
        }
        if let Some(c) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::LengthMismatch {
                id: utterance_id,
                what: format!("confidence {c} outside [0, 1]"),
            });
        }
        Ok(Self {
            utterance_id,
            tokens,
            confidences,
            source,
            generator_model_id: generator_model_id.into(),
        })
    }

    /// Round confidences to the precision kept by the store file.
    pub fn quantized(mut self) -> Self {
        for c in &mut self.confidences {
            *c = quantize(*c);
        }
        self
    }
}

pub(crate) fn quantize(c: f64) -> f64 {
    format!("{c:.6}").parse().expect("formatted float parses")
}

/// An unlabeled utterance paired with its current pseudo-transcription.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabeled {
    pub utterance: UnlabeledUtterance,
    pub pt: PTRecord,
}

impl PseudoLabeled {
    pub fn id(&self) -> &str {
        &self.utterance.id
    }
}

/// Join utterances with records by id; utterances without a record are
/// skipped (they were filtered during generation).
pub fn attach(utterances: &[UnlabeledUtterance], records: &[PTRecord]) -> Vec<PseudoLabeled> {
    let by_id: std::collections::HashMap<&str, &PTRecord> =
        records.iter().map(|r| (r.utterance_id.as_str(), r)).collect();
    utterances
        .iter()
        .filter_map(|u| {
            by_id.get(u.id.as_str()).map(|r| PseudoLabeled {
                utterance: u.clone(),
                pt: (*r).clone(),
            })
        })
        .collect()
}

/// Whether rows are one-hot targets or full distributions.
pub use crate::train::LabelKind;

/// Per-position targets, `|tokens| x V`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMatrix {
    kind: LabelKind,
    rows: crate::numerics::Tensor,
}

impl LabelMatrix {
    /// Exact one-hot rows at `tokens`.
    pub fn one_hot(tokens: &[usize], vocab: usize) -> Result<Self> {
        if let Some(&t) = tokens.iter().find(|&&t| t >= vocab) {
            return Err(Error::InvalidTokens(format!("token {t} outside vocabulary of size {vocab}")));
        }
        let mut data = vec![0.0; tokens.len() * vocab];
        for (j, &t) in tokens.iter().enumerate() {
            data[j * vocab + t] = 1.0;
        }
        Ok(Self {
            kind: LabelKind::Hard,
            rows: crate::numerics::Tensor::matrix(tokens.len(), vocab, data)?,
        })
    }

    /// Targets from a posterior matrix: its argmax rows (hard) or the rows
    /// themselves (soft). Returns the row maxima as confidences.
    pub fn from_posteriors(posteriors: crate::numerics::Tensor, kind: LabelKind) -> Result<(Self, Vec<f64>)> {
        let vocab = posteriors.cols();
        let mut best = Vec::with_capacity(posteriors.rows());
        let mut conf = Vec::with_capacity(posteriors.rows());
        for j in 0..posteriors.rows() {
            let (k, p) = argmax(posteriors.row_slice(j));
            best.push(k);
            conf.push(p);
        }
        let m = match kind {
            LabelKind::Hard => Self::one_hot(&best, vocab)?,
            LabelKind::Soft => Self {
                kind,
                rows: posteriors,
            },
        };
        Ok((m, conf))
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn vocab(&self) -> usize {
        self.rows.cols()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        self.rows.row_slice(j)
    }

    pub fn as_tensor(&self) -> &crate::numerics::Tensor {
        &self.rows
    }

    /// Most probable class per row.
    pub fn argmax_tokens(&self) -> Vec<usize> {
        (0..self.len()).map(|j| argmax(self.row(j)).0).collect()
    }
}

/// Index of the largest entry; ties go to the smaller index.
pub(crate) fn argmax_row(row: &[f64]) -> usize {
    argmax(row).0
}

/// Index and value of the largest entry; ties go to the smaller index.
pub(crate) fn argmax(row: &[f64]) -> (usize, f64) {
    row.iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, p)| if p > best.1 { (k, p) } else { best })
}

/// Loop filter thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopFilter {
    /// Longest n-gram examined.
    pub n_max: usize,
    /// Consecutive repeats that trigger rejection.
    pub r_min: usize,
}

impl Default for LoopFilter {
    fn default() -> Self {
        Self { n_max: 4, r_min: 3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoopVerdict {
    Keep,
    Reject,
}

impl LoopFilter {
    /// True if some n-gram with `n <= n_max` occurs `r_min` or more times
    /// back to back.
    pub fn rejects(&self, tokens: &[usize]) -> bool {
        for n in 1..=self.n_max {
            if n * self.r_min > tokens.len() {
                break;
            }
            for start in 0..=tokens.len() - n * self.r_min {
                let gram = &tokens[start..start + n];
                let repeats = tokens[start..]
                    .chunks_exact(n)
                    .take_while(|c| *c == gram)
                    .count();
                if repeats >= self.r_min {
                    return true;
                }
            }
        }
        false
    }
}

/// Apply the loop filter to a record's content tokens.
pub fn loop_filter(record: &PTRecord, n_max: usize, r_min: usize) -> LoopVerdict {
    let filter = LoopFilter { n_max, r_min };
    if filter.rejects(record.tokens.content()) {
        LoopVerdict::Reject
    } else {
        LoopVerdict::Keep
    }
}
