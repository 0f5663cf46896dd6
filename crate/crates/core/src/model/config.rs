use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Acoustic front end applied before the recurrent encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frontend {
    /// One learned affine projection per frame.
    Linear,
    /// Three width-3 temporal convolutions with tanh activations.
    ConvStack,
}

impl Frontend {
    pub fn name(self) -> &'static str {
        match self {
            Frontend::Linear => "linear",
            Frontend::ConvStack => "conv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Frontend::Linear),
            "conv" => Ok(Frontend::ConvStack),
            other => Err(Error::InvalidConfig(format!("unknown frontend `{other}`"))),
        }
    }
}

pub(crate) const CONV_LAYERS: usize = 3;
pub(crate) const CONV_WIDTH: usize = 3;

/// Topology of the attention encoder-decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub frontend: Frontend,
    pub frontend_dim: usize,
    pub encoder_layers: usize,
    /// Units per direction.
    pub encoder_units: usize,
    /// Encoder layers whose output is halved in time before the next layer.
    pub decimation_after: BTreeSet<usize>,
    pub decoder_layers: usize,
    pub decoder_units: usize,
    /// Includes the start and end symbols.
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub attention_dim: usize,
    pub dropout_p: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feature_dim: 16,
            frontend: Frontend::Linear,
            frontend_dim: 32,
            encoder_layers: 2,
            encoder_units: 32,
            decimation_after: BTreeSet::from([0]),
            decoder_layers: 1,
            decoder_units: 64,
            vocab_size: 26,
            embedding_dim: 16,
            attention_dim: 32,
            dropout_p: 0.1,
        }
    }
}

impl ModelConfig {
    /// Full-size topology: 80-dim features, convolutional front end, six
    /// bidirectional layers of 512 units with 8x time reduction, two
    /// 1024-unit decoder layers and 2k output classes.
    pub fn full_scale() -> Self {
        Self {
            feature_dim: 80,
            frontend: Frontend::ConvStack,
            frontend_dim: 512,
            encoder_layers: 6,
            encoder_units: 512,
            decimation_after: BTreeSet::from([0, 2, 4]),
            decoder_layers: 2,
            decoder_units: 1024,
            vocab_size: 2000,
            embedding_dim: 512,
            attention_dim: 512,
            dropout_p: 0.3,
        }
    }

    pub fn decimation_factor(&self) -> usize {
        1 << self.decimation_after.len()
    }

    /// Number of encoder states produced for `frames` input frames.
    pub fn encoder_length(&self, frames: usize) -> usize {
        self.decimation_after
            .iter()
            .fold(frames, |t, _| t.div_ceil(2))
    }

    /// Width of the encoder output (both directions).
    pub fn encoder_width(&self) -> usize {
        2 * self.encoder_units
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.vocab_size < 3 {
            return bad(format!("vocab_size must be at least 3, got {}", self.vocab_size));
        }
        for (name, v) in [
            ("feature_dim", self.feature_dim),
            ("frontend_dim", self.frontend_dim),
            ("encoder_layers", self.encoder_layers),
            ("encoder_units", self.encoder_units),
            ("decoder_layers", self.decoder_layers),
            ("decoder_units", self.decoder_units),
            ("embedding_dim", self.embedding_dim),
            ("attention_dim", self.attention_dim),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if let Some(&last) = self.decimation_after.iter().next_back() {
            if last + 1 >= self.encoder_layers {
                return bad(format!(
                    "decimation after layer {last} needs a following encoder layer (have {})",
                    self.encoder_layers
                ));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p must be in [0, 1), got {}", self.dropout_p));
        }
        Ok(())
    }

    /// Input width of encoder layer `layer`.
    pub(crate) fn encoder_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.frontend_dim
        } else if self.decimation_after.contains(&(layer - 1)) {
            2 * self.encoder_width()
        } else {
            self.encoder_width()
        }
    }

    /// `(name, shape)` of every parameter, in initialization order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut push = |name: String, shape: Vec<usize>| out.push((name, shape));
        match self.frontend {
            Frontend::Linear => {
                push("frontend.w".into(), vec![self.feature_dim, self.frontend_dim]);
                push("frontend.b".into(), vec![1, self.frontend_dim]);
            }
            Frontend::ConvStack => {
                for i in 0..CONV_LAYERS {
                    let input = if i == 0 { self.feature_dim } else { self.frontend_dim };
                    push(format!("frontend.conv{i}.w"), vec![CONV_WIDTH * input, self.frontend_dim]);
                    push(format!("frontend.conv{i}.b"), vec![1, self.frontend_dim]);
                }
            }
        }
        let h = self.encoder_units;
        for l in 0..self.encoder_layers {
            let input = self.encoder_input_dim(l);
            for dir in ["fw", "bw"] {
                push(format!("encoder.{l}.{dir}.w_ih"), vec![input, 4 * h]);
                push(format!("encoder.{l}.{dir}.w_hh"), vec![h, 4 * h]);
                push(format!("encoder.{l}.{dir}.b"), vec![1, 4 * h]);
            }
        }
        let (enc, dec, att) = (self.encoder_width(), self.decoder_units, self.attention_dim);
        push("attention.query".into(), vec![dec, att]);
        push("attention.key".into(), vec![enc, att]);
        push("attention.bias".into(), vec![1, att]);
        push("attention.v".into(), vec![att, 1]);
        push("decoder.embedding".into(), vec![self.vocab_size, self.embedding_dim]);
        for l in 0..self.decoder_layers {
            let input = if l == 0 { self.embedding_dim + enc } else { dec };
            push(format!("decoder.{l}.w_ih"), vec![input, 4 * dec]);
            push(format!("decoder.{l}.w_hh"), vec![dec, 4 * dec]);
            push(format!("decoder.{l}.b"), vec![1, 4 * dec]);
        }
        push("output.dense.w".into(), vec![dec + enc, dec]);
        push("output.dense.b".into(), vec![1, dec]);
        push("output.proj.w".into(), vec![dec, self.vocab_size]);
        push("output.proj.b".into(), vec![1, self.vocab_size]);
        out
    }

    /// Flat `key = value` lines under `prefix`.
    pub fn to_kv(&self, prefix: &str) -> Vec<(String, String)> {
        let set = self
            .decimation_after
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let k = |s: &str| format!("{prefix}{s}");
        vec![
            (k("feature_dim"), self.feature_dim.to_string()),
            (k("frontend"), self.frontend.name().into()),
            (k("frontend_dim"), self.frontend_dim.to_string()),
            (k("encoder_layers"), self.encoder_layers.to_string()),
            (k("encoder_units"), self.encoder_units.to_string()),
            (k("decimation_after"), set),
            (k("decoder_layers"), self.decoder_layers.to_string()),
            (k("decoder_units"), self.decoder_units.to_string()),
            (k("vocab_size"), self.vocab_size.to_string()),
            (k("embedding_dim"), self.embedding_dim.to_string()),
            (k("attention_dim"), self.attention_dim.to_string()),
            (k("dropout_p"), format!("{:?}", self.dropout_p)),
        ]
    }

    /// Apply one `key = value` setting (key without prefix).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        use crate::config::{parse_f64, parse_usize};
        match key {
            "feature_dim" => self.feature_dim = parse_usize(key, value)?,
            "frontend" => self.frontend = Frontend::parse(value)?,
            "frontend_dim" => self.frontend_dim = parse_usize(key, value)?,
            "encoder_layers" => self.encoder_layers = parse_usize(key, value)?,
            "encoder_units" => self.encoder_units = parse_usize(key, value)?,
            "decimation_after" => {
                self.decimation_after = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_usize(key, s))
                    .collect::<Result<_>>()?
            }
            "decoder_layers" => self.decoder_layers = parse_usize(key, value)?,
            "decoder_units" => self.decoder_units = parse_usize(key, value)?,
            "vocab_size" => self.vocab_size = parse_usize(key, value)?,
            "embedding_dim" => self.embedding_dim = parse_usize(key, value)?,
            "attention_dim" => self.attention_dim = parse_usize(key, value)?,
            "dropout_p" => self.dropout_p = parse_f64(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown model key `{other}`"))),
        }
        Ok(())
    }
}
