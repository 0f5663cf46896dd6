//! Target-synchronous beam search with histogram pruning.
//!
//! Hypotheses are ranked by
//! `log p(y|x) + λ_cov·cov + λ_wip·|y| + ((5 + |y|) / 6)^λ_rlp`, where `cov`
//! counts encoder states whose accumulated attention exceeds `coverage_tau`
//! and `|y|` counts emitted tokens including the end symbol.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{edit_distance_align, ScoreReport};
use crate::model::{decoder_step, encode, DecoderState, Dropout, EncoderOutput, ModelParams};
use crate::sequence::{FeatureMatrix, TokenSequence, Utterance, EOS, SOS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beam_width: usize,
    pub lambda_cov: f64,
    pub lambda_wip: f64,
    pub lambda_rlp: f64,
    pub coverage_tau: f64,
    /// Length cap as a multiple of the encoder state count.
    pub max_len_factor: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam_width: 16,
            lambda_cov: 0.2,
            lambda_wip: 0.0,
            lambda_rlp: 1.0,
            coverage_tau: 0.5,
            max_len_factor: 3.0,
        }
    }
}

impl BeamConfig {
    /// Plain log-probability ranking.
    pub fn unscored(beam_width: usize) -> Self {
        Self {
            beam_width,
            lambda_cov: 0.0,
            lambda_wip: 0.0,
            lambda_rlp: 0.0,
            ..Self::default()
        }
    }

    pub fn max_len(&self, encoder_len: usize) -> usize {
        ((self.max_len_factor * encoder_len as f64).floor() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::InvalidConfig("beam_width must be at least 1".into()));
        }
        if self.lambda_cov < 0.0 {
            return Err(Error::InvalidConfig("lambda_cov must be non-negative".into()));
        }
        if self.max_len_factor.is_nan() || self.max_len_factor <= 0.0 {
            return Err(Error::InvalidConfig("max_len_factor must be positive".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self, prefix: &str) -> Vec<(String, String)> {
        let k = |s: &str| format!("{prefix}{s}");
        vec![
            (k("beam_width"), self.beam_width.to_string()),
            (k("lambda_cov"), format!("{:?}", self.lambda_cov)),
            (k("lambda_wip"), format!("{:?}", self.lambda_wip)),
            (k("lambda_rlp"), format!("{:?}", self.lambda_rlp)),
            (k("coverage_tau"), format!("{:?}", self.coverage_tau)),
            (k("max_len_factor"), format!("{:?}", self.max_len_factor)),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        use crate::config::{parse_f64, parse_usize};
        match key {
            "beam_width" => self.beam_width = parse_usize(key, value)?,
            "lambda_cov" => self.lambda_cov = parse_f64(key, value)?,
            "lambda_wip" => self.lambda_wip = parse_f64(key, value)?,
            "lambda_rlp" => self.lambda_rlp = parse_f64(key, value)?,
            "coverage_tau" => self.coverage_tau = parse_f64(key, value)?,
            "max_len_factor" => self.max_len_factor = parse_f64(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown beam key `{other}`"))),
        }
        Ok(())
    }
}

/// What a decoder exposes to the search.
pub trait StepModel {
    type State: Clone;

    fn initial_state(&self) -> Self::State;
    fn encoder_len(&self) -> usize;
    fn vocab_size(&self) -> usize;
    /// Log posteriors over the vocabulary and attention over encoder states
    /// for the next token after `prev_token`.
    fn step(&self, state: &Self::State, prev_token: usize) -> Result<StepScores<Self::State>>;
}

pub struct StepScores<S> {
    pub log_posteriors: Vec<f64>,
    pub attention: Vec<f64>,
    pub state: S,
}

/// Partial or complete decode candidate.
#[derive(Clone, Debug)]
pub struct Hypothesis<S = DecoderState> {
    pub tokens: TokenSequence,
    /// Sum of chosen-token log posteriors.
    pub log_prob: f64,
    pub token_log_probs: Vec<f64>,
    /// Cumulative attention per encoder state.
    pub attention_accum: Vec<f64>,
    pub state: S,
    pub finished: bool,
    pub score: f64,
}

impl<S> Hypothesis<S> {
    /// Per-token posterior probabilities of the chosen tokens.
    pub fn confidences(&self) -> Vec<f64> {
        self.token_log_probs.iter().map(|l| l.exp()).collect()
    }

    /// Replace the decoder state (e.g. drop it after decoding).
    pub fn map_state<T>(self, f: impl FnOnce(S) -> T) -> Hypothesis<T> {
        Hypothesis {
            tokens: self.tokens,
            log_prob: self.log_prob,
            token_log_probs: self.token_log_probs,
            attention_accum: self.attention_accum,
            state: f(self.state),
            finished: self.finished,
            score: self.score,
        }
    }
}

/// Number of encoder states whose accumulated attention exceeds `tau`.
pub fn coverage(attention_accum: &[f64], tau: f64) -> usize {
    attention_accum.iter().filter(|&&a| a > tau).count()
}

/// Score of a sequence given its components.
pub fn sequence_score(log_prob: f64, attention_accum: &[f64], len: usize, cfg: &BeamConfig) -> f64 {
    let cov = coverage(attention_accum, cfg.coverage_tau) as f64;
    let length_term = ((5.0 + len as f64) / 6.0).powf(cfg.lambda_rlp);
    log_prob + cfg.lambda_cov * cov + cfg.lambda_wip * len as f64 + length_term
}

pub fn hypothesis_score<S>(h: &Hypothesis<S>, cfg: &BeamConfig) -> f64 {
    sequence_score(h.log_prob, &h.attention_accum, h.tokens.len(), cfg)
}

/// Best first: higher score, then lexicographically smaller tokens.
fn rank<S>(a: &Hypothesis<S>, b: &Hypothesis<S>) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Ranked finished hypotheses, best first.
pub fn beam_search<M: StepModel>(model: &M, cfg: &BeamConfig) -> Result<Vec<Hypothesis<M::State>>> {
    cfg.validate()?;
    let max_len = cfg.max_len(model.encoder_len());
    let width = cfg.beam_width;
    let mut pool = vec![Hypothesis {
        tokens: TokenSequence::default(),
        log_prob: 0.0,
        token_log_probs: Vec::new(),
        attention_accum: vec![0.0; model.encoder_len()],
        state: model.initial_state(),
        finished: false,
        score: f64::NEG_INFINITY,
    }];

    for _ in 0..max_len {
        let mut candidates = Vec::with_capacity(pool.len() * width);
        for h in pool {
            if h.finished {
                candidates.push(h);
                continue;
            }
            let prev = h.tokens.tokens().last().copied().unwrap_or(SOS);
            let out = model.step(&h.state, prev)?;
            let accum: Vec<f64> = h
                .attention_accum
                .iter()
                .zip(&out.attention)
                .map(|(a, b)| a + b)
                .collect();
            // Siblings share every score term except the token's own log
            // posterior, so only the best `width` of them can survive.
            let mut order: Vec<usize> = (0..out.log_posteriors.len()).filter(|&k| k != SOS).collect();
            order.sort_by(|&a, &b| {
                out.log_posteriors[b]
                    .total_cmp(&out.log_posteriors[a])
                    .then(a.cmp(&b))
            });
            order.truncate(width);
            for k in order {
                let mut tokens = h.tokens.clone();
                tokens.push(k);
                let mut token_log_probs = h.token_log_probs.clone();
                token_log_probs.push(out.log_posteriors[k]);
                let log_prob = h.log_prob + out.log_posteriors[k];
                let score = sequence_score(log_prob, &accum, tokens.len(), cfg);
                candidates.push(Hypothesis {
                    tokens,
                    log_prob,
                    token_log_probs,
                    attention_accum: accum.clone(),
                    state: out.state.clone(),
                    finished: k == EOS,
                    score,
                });
            }
        }
        candidates.sort_by(rank);
        candidates.truncate(width);
        pool = candidates;
        if pool.iter().all(|h| h.finished) {
            break;
        }
    }

    let finished: Vec<_> = pool.into_iter().filter(|h| h.finished).collect();
    if finished.is_empty() {
        return Err(Error::DecodeFailure { max_len });
    }
    Ok(finished)
}

/// The attention encoder-decoder as a [`StepModel`] for one utterance.
pub struct Seq2SeqStep<'a> {
    params: &'a ModelParams,
    encoded: EncoderOutput,
}

impl<'a> Seq2SeqStep<'a> {
    pub fn new(params: &'a ModelParams, features: &FeatureMatrix) -> Result<Self> {
        let encoded = encode(params, features, &mut Dropout::Off)?;
        Ok(Self { params, encoded })
    }

    pub fn from_encoded(params: &'a ModelParams, encoded: EncoderOutput) -> Self {
        Self { params, encoded }
    }
}

impl StepModel for Seq2SeqStep<'_> {
    type State = DecoderState;

    fn initial_state(&self) -> DecoderState {
        DecoderState::initial(self.params.config())
    }

    fn encoder_len(&self) -> usize {
        self.encoded.len()
    }

    fn vocab_size(&self) -> usize {
        self.params.config().vocab_size
    }

    fn step(&self, state: &DecoderState, prev_token: usize) -> Result<StepScores<DecoderState>> {
        let out = decoder_step(self.params, state, prev_token, &self.encoded, &mut Dropout::Off)?;
        Ok(StepScores {
            log_posteriors: out.log_posteriors,
            attention: out.attention,
            state: out.state,
        })
    }
}

/// Beam search on clean input with dropout off.
pub fn decode_utterance(
    params: &ModelParams,
    features: &FeatureMatrix,
    cfg: &BeamConfig,
) -> Result<Vec<Hypothesis<()>>> {
    let model = Seq2SeqStep::new(params, features)?;
    Ok(beam_search(&model, cfg)?
        .into_iter()
        .map(|h| h.map_state(|_| ()))
        .collect())
}

/// Best hypothesis, or `None` if no hypothesis finished within the cap.
pub fn best_hypothesis(
    params: &ModelParams,
    features: &FeatureMatrix,
    cfg: &BeamConfig,
) -> Result<Option<Hypothesis<()>>> {
    match decode_utterance(params, features, cfg) {
        Ok(mut ranked) => Ok(Some(ranked.swap_remove(0))),
        Err(Error::DecodeFailure { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Corpus WER of the best hypotheses against reference transcriptions.
/// An utterance that fails to decode counts as an empty hypothesis.
pub fn score_dataset(params: &ModelParams, data: &[Utterance], cfg: &BeamConfig) -> Result<ScoreReport> {
    let mut total = ScoreReport::default();
    for utt in data {
        let hyp = best_hypothesis(params, &utt.features, cfg).map_err(|e| e.with_utterance(&utt.id))?;
        let hyp_tokens = hyp.as_ref().map(|h| h.tokens.content()).unwrap_or(&[]);
        total = total.merge(&edit_distance_align(utt.tokens.content(), hyp_tokens)?);
    }
    if total.reference_length == 0 {
        return Err(Error::EmptyReference);
    }
    Ok(total)
}

/// One line per hypothesis: id, rank, score, log_prob, tokens, confidences
/// (tab separated; tokens and confidences space separated).
pub fn write_decode_output<W: Write, S>(w: &mut W, utterance_id: &str, ranked: &[Hypothesis<S>]) -> Result<()> {
    for (rank, h) in ranked.iter().enumerate() {
        let mut conf = String::new();
        for (i, c) in h.confidences().iter().enumerate() {
            if i > 0 {
                conf.push(' ');
            }
            let _ = write!(conf, "{c:.6}");
        }
        writeln!(
            w,
            "{utterance_id}\t{rank}\t{:.6}\t{:.6}\t{}\t{conf}",
            h.score, h.log_prob, h.tokens
        )?;
    }
    Ok(())
}
