//! Fixtures shared by unit tests.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::ModelConfig;
use crate::pseudolabel::{PTRecord, PseudoLabeled, PtSource};
use crate::sequence::{FeatureMatrix, TokenSequence, Utterance, FIRST_CONTENT};

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        feature_dim: 6,
        frontend_dim: 5,
        encoder_layers: 2,
        encoder_units: 4,
        decimation_after: BTreeSet::from([0]),
        decoder_layers: 1,
        decoder_units: 6,
        vocab_size: 7,
        embedding_dim: 3,
        attention_dim: 4,
        dropout_p: 0.3,
        ..ModelConfig::default()
    }
}

/// Random utterances whose features loosely encode their tokens.
pub fn utterances(cfg: &ModelConfig, n: usize, seed: u64) -> Vec<Utterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(1..4);
            let content: Vec<usize> = (0..len)
                .map(|_| rng.gen_range(FIRST_CONTENT..cfg.vocab_size))
                .collect();
            let frames = 3 * len + 1;
            let values = (0..frames * cfg.feature_dim)
                .map(|k| {
                    let tok = content[(k / cfg.feature_dim / 3).min(len - 1)];
                    ((tok * 7 + k % cfg.feature_dim) as f64).sin() + 0.1 * rng.gen::<f64>()
                })
                .collect();
            Utterance {
                id: format!("u{i}"),
                features: FeatureMatrix::new(frames, cfg.feature_dim, values).unwrap(),
                tokens: TokenSequence::terminated(&content),
            }
        })
        .collect()
}

/// Treat transcriptions as pseudo-labels with the given confidences.
pub fn as_pseudo(utts: &[Utterance], conf: impl Fn(usize, usize) -> f64) -> Vec<PseudoLabeled> {
    utts.iter()
        .enumerate()
        .map(|(i, u)| PseudoLabeled {
            utterance: u.unlabeled(),
            pt: PTRecord::new(
                &u.id,
                u.tokens.clone(),
                (0..u.tokens.len()).map(|j| conf(i, j)).collect(),
                PtSource::OfflineBeam,
                "test",
            )
            .unwrap(),
        })
        .collect()
}
