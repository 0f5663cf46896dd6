//! SpecAugment-style masking: contiguous frequency bands and time frames are
//! replaced by zeros.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::FeatureMatrix;

/// Feature width the preset values are expressed in.
pub const REFERENCE_FEATURE_DIM: usize = 80;

/// Mask budget. All zeros is the identity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AugmentPolicy {
    /// Maximum contiguous frequency bands per mask.
    pub f_max: usize,
    /// Maximum contiguous frames per mask.
    pub t_max: usize,
    /// Number of frequency masks.
    pub m_f: usize,
    /// Number of time masks.
    pub m_t: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Strong,
    Weak,
    None,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "strong" => Ok(Preset::Strong),
            "weak" => Ok(Preset::Weak),
            "none" => Ok(Preset::None),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

/// Which axis a mask covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskAxis {
    Frequency,
    Time,
}

/// One applied mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskSpan {
    pub axis: MaskAxis,
    pub start: usize,
    pub width: usize,
}

impl AugmentPolicy {
    pub const IDENTITY: AugmentPolicy = AugmentPolicy {
        f_max: 0,
        t_max: 0,
        m_f: 0,
        m_t: 0,
    };

    pub fn new(f_max: usize, t_max: usize, m_f: usize, m_t: usize) -> Self {
        Self { f_max, t_max, m_f, m_t }
    }

    pub fn is_identity(&self) -> bool {
        (self.f_max == 0 || self.m_f == 0) && (self.t_max == 0 || self.m_t == 0)
    }

    /// Parse a preset name or an explicit `f_max,t_max,m_f,m_t` tuple.
    pub fn parse(s: &str, feature_dim: usize) -> Result<Self> {
        if s.contains(',') {
            let parts: Vec<usize> = s
                .split(',')
                .map(|p| crate::config::parse_usize("augment policy", p.trim()))
                .collect::<Result<_>>()?;
            match parts.as_slice() {
                &[f_max, t_max, m_f, m_t] => Ok(Self::new(f_max, t_max, m_f, m_t)),
                _ => Err(Error::InvalidConfig(format!(
                    "augment policy `{s}` needs four values f_max,t_max,m_f,m_t"
                ))),
            }
        } else {
            preset(s, feature_dim)
        }
    }
}

impl fmt::Display for AugmentPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.f_max, self.t_max, self.m_f, self.m_t)
    }
}

fn scale_width(value: usize, feature_dim: usize) -> usize {
    if value == 0 {
        return 0;
    }
    let scaled = (value as f64 * feature_dim as f64 / REFERENCE_FEATURE_DIM as f64).round() as usize;
    scaled.max(1)
}

/// Named policy with widths scaled by `feature_dim / 80`.
///
/// At 80 features: strong is `(35, 50, 1, 2)`, weak is `(5, 0, 1, 0)`
/// (frequency masking only). Mask counts are not scaled.
pub fn preset(name: &str, feature_dim: usize) -> Result<AugmentPolicy> {
    let base = match Preset::parse(name)? {
        Preset::Strong => AugmentPolicy::new(35, 50, 1, 2),
        Preset::Weak => AugmentPolicy::new(5, 0, 1, 0),
        Preset::None => return Ok(AugmentPolicy::IDENTITY),
    };
    Ok(AugmentPolicy {
        f_max: scale_width(base.f_max, feature_dim),
        t_max: scale_width(base.t_max, feature_dim),
        ..base
    })
}

fn sample_span(rng: &mut impl Rng, axis: MaskAxis, max_width: usize, dim: usize) -> MaskSpan {
    let width = rng.gen_range(0..=max_width).min(dim);
    let start = rng.gen_range(0..=dim - width);
    MaskSpan { axis, start, width }
}

/// Apply `policy` with masks drawn from `rng`, returning the masks used.
pub fn spec_augment_with(
    x: &FeatureMatrix,
    policy: &AugmentPolicy,
    rng: &mut impl Rng,
) -> (FeatureMatrix, Vec<MaskSpan>) {
    let mut out = x.clone();
    if policy.is_identity() {
        return (out, Vec::new());
    }
    let (frames, bands) = (x.frames(), x.dim());
    let mut spans = Vec::with_capacity(policy.m_f + policy.m_t);
    for _ in 0..policy.m_f {
        spans.push(sample_span(rng, MaskAxis::Frequency, policy.f_max, bands));
    }
    for _ in 0..policy.m_t {
        spans.push(sample_span(rng, MaskAxis::Time, policy.t_max, frames));
    }
    let values = out.values_mut();
    for span in &spans {
        match span.axis {
            MaskAxis::Frequency => {
                for row in values.chunks_exact_mut(bands) {
                    row[span.start..span.start + span.width].fill(0.0);
                }
            }
            MaskAxis::Time => {
                values[span.start * bands..(span.start + span.width) * bands].fill(0.0);
            }
        }
    }
    (out, spans)
}

/// Apply `policy` with masks drawn from a stream seeded by `seed`.
pub fn spec_augment(x: &FeatureMatrix, policy: &AugmentPolicy, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    spec_augment_with(x, policy, &mut rng).0
}
