use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Frontend, ModelConfig, CONV_WIDTH};
use super::params::{BoundParams, LstmVars, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::sequence::{FeatureMatrix, TokenSequence};

/// Dropout switch carrying its own mask random stream.
#[derive(Clone, Debug)]
pub enum Dropout {
    Off,
    On { p: f64, rng: ChaCha8Rng },
}

impl Dropout {
    pub fn on(p: f64, seed: u64) -> Self {
        Dropout::On {
            p,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn is_on(&self) -> bool {
        matches!(self, Dropout::On { .. })
    }

    /// Sample a fresh keep-mask for `x` and apply it.
    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Dropout::Off => x,
            Dropout::On { p, .. } if *p == 0.0 => x,
            Dropout::On { p, rng } => {
                let n = tape.value(x).len();
                let mask = (0..n).map(|_| rng.gen::<f64>() >= *p).collect();
                tape.dropout(x, mask, *p)
            }
        }
    }
}

/// Encoder states of one utterance plus their attention keys.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    /// `E x 2H` matrix.
    pub states: Arc<Tensor>,
    /// `E x A` precomputed key projection `U h_e + b`.
    pub keys: Arc<Tensor>,
    pub source_length: usize,
}

impl EncoderOutput {
    pub fn len(&self) -> usize {
        self.states.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Recurrent state between decoder steps.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState {
    /// `(h, c)` per decoder layer, each `1 x units`.
    pub layers: Vec<(Arc<Tensor>, Arc<Tensor>)>,
    /// Context vector from the previous step, `1 x 2H`.
    pub context: Arc<Tensor>,
}

impl DecoderState {
    pub fn initial(cfg: &ModelConfig) -> Self {
        let zeros = |n| Arc::new(Tensor::zeros(&[1, n]));
        Self {
            layers: (0..cfg.decoder_layers)
                .map(|_| (zeros(cfg.decoder_units), zeros(cfg.decoder_units)))
                .collect(),
            context: zeros(cfg.encoder_width()),
        }
    }
}

/// Output of a single decoder step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub posteriors: Vec<f64>,
    pub log_posteriors: Vec<f64>,
    pub attention: Vec<f64>,
    pub state: DecoderState,
}

/// Graph handles for an encoded utterance.
#[derive(Clone, Copy, Debug)]
pub struct EncodedVars {
    pub states: Var,
    pub keys: Var,
    pub source_length: usize,
}

#[derive(Clone, Debug)]
pub struct StateVars {
    pub layers: Vec<(Var, Var)>,
    pub context: Var,
}

#[derive(Clone, Debug)]
pub struct StepVars {
    /// `1 x V` unnormalized scores.
    pub logits: Var,
    /// `1 x E` attention weights.
    pub attention: Var,
    pub state: StateVars,
}

fn lstm_cell(tape: &mut Tape, pre: Var, h: Var, c: Var, w_hh: Var, units: usize) -> (Var, Var) {
    let rec = tape.matmul(h, w_hh);
    let gates = tape.add(pre, rec);
    let if_pre = tape.slice(gates, 1, 0, 2 * units);
    let if_gates = tape.logistic(if_pre);
    let input = tape.slice(if_gates, 1, 0, units);
    let forget = tape.slice(if_gates, 1, units, units);
    let g_pre = tape.slice(gates, 1, 2 * units, units);
    let cand = tape.tanh(g_pre);
    let o_pre = tape.slice(gates, 1, 3 * units, units);
    let out = tape.logistic(o_pre);
    let keep = tape.mul(forget, c);
    let write = tape.mul(input, cand);
    let c_new = tape.add(keep, write);
    let squashed = tape.tanh(c_new);
    let h_new = tape.mul(out, squashed);
    (h_new, c_new)
}

fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Var {
    let xw = tape.matmul(x, w);
    tape.add(xw, b)
}

fn lstm_sequence(tape: &mut Tape, x: Var, lstm: LstmVars, units: usize, reverse: bool) -> Var {
    let frames = tape.shape(x)[0];
    let pre = affine(tape, x, lstm.w_ih, lstm.b);
    let mut h = tape.constant(Tensor::zeros(&[1, units]));
    let mut c = tape.constant(Tensor::zeros(&[1, units]));
    let mut outputs = vec![h; frames];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..frames).rev())
    } else {
        Box::new(0..frames)
    };
    for t in order {
        let pre_t = tape.slice(pre, 0, t, 1);
        (h, c) = lstm_cell(tape, pre_t, h, c, lstm.w_hh, units);
        outputs[t] = h;
    }
    tape.concat(&outputs, 0)
}

/// Concatenate adjacent frame pairs, zero-padding an odd final frame.
fn decimate(tape: &mut Tape, x: Var) -> Var {
    let (frames, width) = (tape.shape(x)[0], tape.shape(x)[1]);
    let padded = if frames % 2 == 1 {
        let pad = tape.constant(Tensor::zeros(&[1, width]));
        tape.concat(&[x, pad], 0)
    } else {
        x
    };
    let rows = frames.div_ceil(2);
    tape.reshape(padded, vec![rows, 2 * width])
}

fn frontend(tape: &mut Tape, bp: &BoundParams, cfg: &ModelConfig, x: Var) -> Var {
    match cfg.frontend {
        Frontend::Linear => {
            let (w, b) = bp.frontend[0];
            affine(tape, x, w, b)
        }
        Frontend::ConvStack => {
            let mut h = x;
            for &(w, b) in &bp.frontend {
                let (frames, width) = (tape.shape(h)[0], tape.shape(h)[1]);
                let half = CONV_WIDTH / 2;
                let pad = tape.constant(Tensor::zeros(&[half, width]));
                let padded = tape.concat(&[pad, h, pad], 0);
                let taps: Vec<Var> = (0..CONV_WIDTH)
                    .map(|k| tape.slice(padded, 0, k, frames))
                    .collect();
                let unfolded = tape.concat(&taps, 1);
                let pre = affine(tape, unfolded, w, b);
                h = tape.tanh(pre);
            }
            h
        }
    }
}

/// Build the encoder graph for one utterance.
pub fn encode_graph(
    tape: &mut Tape,
    bp: &BoundParams,
    cfg: &ModelConfig,
    features: &FeatureMatrix,
    dropout: &mut Dropout,
) -> Result<EncodedVars> {
    let factor = cfg.decimation_factor();
    if features.frames() < factor {
        return Err(Error::UtteranceTooShort {
            id: String::new(),
            frames: features.frames(),
            factor,
        });
    }
    if features.dim() != cfg.feature_dim {
        return Err(Error::Shape {
            primitive: "encode",
            shapes: vec![features.as_tensor().shape().to_vec(), vec![cfg.feature_dim]],
        });
    }
    let x = tape.constant(features.as_tensor().clone());
    let front = frontend(tape, bp, cfg, x);
    let mut h = dropout.apply(tape, front);
    for (l, [fw, bw]) in bp.encoder.iter().enumerate() {
        let f = lstm_sequence(tape, h, *fw, cfg.encoder_units, false);
        let b = lstm_sequence(tape, h, *bw, cfg.encoder_units, true);
        let both = tape.concat(&[f, b], 1);
        h = dropout.apply(tape, both);
        if cfg.decimation_after.contains(&l) {
            h = decimate(tape, h);
        }
    }
    let keys = affine(tape, h, bp.att_key, bp.att_bias);
    Ok(EncodedVars {
        states: h,
        keys,
        source_length: features.frames(),
    })
}

pub fn initial_state_graph(tape: &mut Tape, state: &DecoderState) -> StateVars {
    StateVars {
        layers: state
            .layers
            .iter()
            .map(|(h, c)| {
                (
                    tape.leaf_shared(Arc::clone(h), false),
                    tape.leaf_shared(Arc::clone(c), false),
                )
            })
            .collect(),
        context: tape.leaf_shared(Arc::clone(&state.context), false),
    }
}

/// One decoder step: recurrent update with the previous context, attention
/// from the new state, then the output layer.
pub fn decoder_step_graph(
    tape: &mut Tape,
    bp: &BoundParams,
    cfg: &ModelConfig,
    state: &StateVars,
    prev_token: usize,
    enc: &EncodedVars,
    dropout: &mut Dropout,
) -> StepVars {
    let emb = tape.embedding(bp.embedding, vec![prev_token]);
    let emb = dropout.apply(tape, emb);
    let mut input = tape.concat(&[emb, state.context], 1);
    let mut layers = Vec::with_capacity(bp.decoder.len());
    for (lstm, &(h, c)) in bp.decoder.iter().zip(&state.layers) {
        let pre = affine(tape, input, lstm.w_ih, lstm.b);
        let (h2, c2) = lstm_cell(tape, pre, h, c, lstm.w_hh, cfg.decoder_units);
        layers.push((h2, c2));
        input = h2;
    }
    let s = input;
    let query = tape.matmul(s, bp.att_query);
    let energy_pre = tape.add(enc.keys, query);
    let energy = tape.tanh(energy_pre);
    let scores = tape.matmul(energy, bp.att_v);
    let e = tape.shape(scores)[0];
    let scores = tape.reshape(scores, vec![1, e]);
    let attention = tape.softmax(scores);
    let context = tape.matmul(attention, enc.states);
    let joined = tape.concat(&[s, context], 1);
    let dense_pre = affine(tape, joined, bp.dense_w, bp.dense_b);
    let dense = tape.tanh(dense_pre);
    let dense = dropout.apply(tape, dense);
    let logits = affine(tape, dense, bp.proj_w, bp.proj_b);
    StepVars {
        logits,
        attention,
        state: StateVars { layers, context },
    }
}

/// Teacher-forced logits, one `1 x V` row per target token.
pub fn teacher_forced_graph(
    tape: &mut Tape,
    bp: &BoundParams,
    cfg: &ModelConfig,
    enc: &EncodedVars,
    tokens: &TokenSequence,
    dropout: &mut Dropout,
) -> Result<Vec<Var>> {
    tokens.validate(cfg.vocab_size)?;
    let mut state = initial_state_graph(tape, &DecoderState::initial(cfg));
    let mut rows = Vec::with_capacity(tokens.len());
    for prev in tokens.decoder_inputs() {
        let step = decoder_step_graph(tape, bp, cfg, &state, prev, enc, dropout);
        rows.push(step.logits);
        state = step.state;
    }
    Ok(rows)
}

/// Run the encoder on one utterance.
pub fn encode(params: &ModelParams, features: &FeatureMatrix, dropout: &mut Dropout) -> Result<EncoderOutput> {
    let mut tape = Tape::new();
    let bp = params.bind(&mut tape, false);
    let enc = encode_graph(&mut tape, &bp, params.config(), features, dropout)?;
    Ok(EncoderOutput {
        states: tape.shared_value(enc.states),
        keys: tape.shared_value(enc.keys),
        source_length: enc.source_length,
    })
}

/// Advance the decoder by one token.
pub fn decoder_step(
    params: &ModelParams,
    state: &DecoderState,
    prev_token: usize,
    enc: &EncoderOutput,
    dropout: &mut Dropout,
) -> Result<StepOutput> {
    let cfg = params.config();
    if prev_token >= cfg.vocab_size {
        return Err(Error::InvalidTokens(format!(
            "previous token {prev_token} outside vocabulary of size {}",
            cfg.vocab_size
        )));
    }
    let mut tape = Tape::new();
    let bp = params.bind(&mut tape, false);
    let enc_vars = EncodedVars {
        states: tape.leaf_shared(Arc::clone(&enc.states), false),
        keys: tape.leaf_shared(Arc::clone(&enc.keys), false),
        source_length: enc.source_length,
    };
    let sv = initial_state_graph(&mut tape, state);
    let step = decoder_step_graph(&mut tape, &bp, cfg, &sv, prev_token, &enc_vars, dropout);
    let probs = tape.softmax(step.logits);
    let logp = tape.log_softmax(step.logits);
    Ok(StepOutput {
        posteriors: tape.value(probs).data().to_vec(),
        log_posteriors: tape.value(logp).data().to_vec(),
        attention: tape.value(step.attention).data().to_vec(),
        state: DecoderState {
            layers: step
                .state
                .layers
                .iter()
                .map(|&(h, c)| (tape.shared_value(h), tape.shared_value(c)))
                .collect(),
            context: tape.shared_value(step.state.context),
        },
    })
}

/// Posterior matrix `|tokens| x V` with row `j` equal to `p(y_j | y_<j, x)`.
pub fn forward_teacher_forced(
    params: &ModelParams,
    features: &FeatureMatrix,
    tokens: &TokenSequence,
    dropout: &mut Dropout,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bp = params.bind(&mut tape, false);
    let cfg = params.config();
    tokens.validate(cfg.vocab_size)?;
    let enc = encode_graph(&mut tape, &bp, cfg, features, dropout)?;
    let rows = teacher_forced_graph(&mut tape, &bp, cfg, &enc, tokens, dropout)?;
    let mut data = Vec::with_capacity(rows.len() * cfg.vocab_size);
    for r in rows {
        let p = tape.softmax(r);
        data.extend_from_slice(tape.value(p).data());
    }
    Tensor::matrix(tokens.len(), cfg.vocab_size, data)
}
