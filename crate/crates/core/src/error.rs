use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{primitive}: incompatible shapes {shapes:?}")]
    Shape {
        primitive: &'static str,
        shapes: Vec<Vec<usize>>,
    },

    #[error("tensor of shape {shape:?} cannot hold {len} values")]
    TensorSize { shape: Vec<usize>, len: usize },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("function is not deterministic: two evaluations gave {first} and {second}")]
    NonDeterministic { first: f64, second: f64 },

    #[error("utterance {id}: {frames} frames is shorter than the decimation factor {factor}")]
    UtteranceTooShort {
        id: String,
        frames: usize,
        factor: usize,
    },

    #[error("utterance {id}: {what}")]
    LengthMismatch { id: String, what: String },

    #[error("invalid token sequence: {0}")]
    InvalidTokens(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown augmentation preset `{0}` (expected strong, weak or none)")]
    UnknownPreset(String),

    #[error("decoding found no finished hypothesis within {max_len} steps")]
    DecodeFailure { max_len: usize },

    #[error("non-finite loss at step {step} (utterances: {utterances:?})")]
    NonFiniteLoss { step: usize, utterances: Vec<String> },

    #[error("reference transcription is empty")]
    EmptyReference,

    #[error("recovery rate undefined: baseline WER {baseline} is not above oracle WER {oracle}")]
    UndefinedRecovery { baseline: f64, oracle: f64 },

    #[error("{0}")]
    MissingInput(String),

    #[error("malformed {kind} file: {detail}")]
    Format { kind: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach an utterance id to errors raised below the utterance level.
    pub fn with_utterance(self, utt: &str) -> Self {
        match self {
            Error::UtteranceTooShort { frames, factor, .. } => Error::UtteranceTooShort {
                id: utt.to_string(),
                frames,
                factor,
            },
            Error::InvalidTokens(msg) => Error::LengthMismatch {
                id: utt.to_string(),
                what: msg,
            },
            other => other,
        }
    }

    pub(crate) fn format(kind: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            kind,
            detail: detail.into(),
        }
    }
}
