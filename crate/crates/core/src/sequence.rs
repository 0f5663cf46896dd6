//! Feature grids, token sequences and utterances.

use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Start-of-sequence symbol. Fed to the first decoder step, never emitted.
pub const SOS: usize = 0;
/// End-of-sequence symbol. Terminates every target sequence.
pub const EOS: usize = 1;
/// Id of the first content symbol.
pub const FIRST_CONTENT: usize = 2;

/// A `T x F` grid of per-frame features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix(Tensor);

impl FeatureMatrix {
    pub fn new(frames: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        Ok(Self(Tensor::matrix(frames, dim, values)?))
    }

    pub fn from_tensor(t: Tensor) -> Result<Self> {
        if t.shape().len() != 2 {
            return Err(Error::Shape {
                primitive: "feature_matrix",
                shapes: vec![t.shape().to_vec()],
            });
        }
        Ok(Self(t))
    }

    pub fn frames(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn get(&self, frame: usize, band: usize) -> f64 {
        self.0.data()[frame * self.dim() + band]
    }

    pub fn values(&self) -> &[f64] {
        self.0.data()
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.0.data_mut()
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }
}

/// Output symbols of one utterance, normally terminated by [`EOS`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenSequence(Vec<usize>);

impl TokenSequence {
    pub fn new(tokens: Vec<usize>) -> Self {
        Self(tokens)
    }

    /// Content symbols followed by [`EOS`].
    pub fn terminated(content: &[usize]) -> Self {
        let mut v = content.to_vec();
        v.push(EOS);
        Self(v)
    }

    pub fn tokens(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, token: usize) {
        self.0.push(token);
    }

    pub fn is_terminated(&self) -> bool {
        self.0.last() == Some(&EOS)
    }

    /// Tokens with a trailing [`EOS`] removed, as scored by WER.
    pub fn content(&self) -> &[usize] {
        match self.0.split_last() {
            Some((&EOS, rest)) => rest,
            _ => &self.0,
        }
    }

    /// Decoder inputs for teacher forcing: `SOS, y_1, ..., y_{n-1}`.
    pub fn decoder_inputs(&self) -> Vec<usize> {
        std::iter::once(SOS)
            .chain(self.0.iter().copied())
            .take(self.0.len())
            .collect()
    }

    /// Check that the sequence can be used as a teacher-forcing target.
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::InvalidTokens("empty token sequence".into()));
        }
        if let Some(&bad) = self.0.iter().find(|&&t| t == SOS || t >= vocab_size) {
            return Err(Error::InvalidTokens(format!(
                "token {bad} is the start symbol or outside vocabulary of size {vocab_size}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for t in &self.0 {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "{t}")?;
            first = false;
        }
        Ok(())
    }
}

impl From<Vec<usize>> for TokenSequence {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// A transcribed utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub features: FeatureMatrix,
    pub tokens: TokenSequence,
}

/// An utterance whose transcription is not available to training.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledUtterance {
    pub id: String,
    pub features: FeatureMatrix,
}

impl Utterance {
    /// Drop the transcription.
    pub fn unlabeled(&self) -> UnlabeledUtterance {
        UnlabeledUtterance {
            id: self.id.clone(),
            features: self.features.clone(),
        }
    }
}
