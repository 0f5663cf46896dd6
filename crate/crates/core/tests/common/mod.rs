//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqssl::augment::{preset, AugmentPolicy};
use seqssl::model::ModelConfig;
use seqssl::numerics::Tensor;
use seqssl::sequence::{FeatureMatrix, TokenSequence, Utterance, FIRST_CONTENT};
use seqssl::train::TrainConfig;

/// Smooth deterministic features.
pub fn features(frames: usize, dim: usize, seed: u64) -> FeatureMatrix {
    let values = (0..frames * dim)
        .map(|i| (i as f64 * 0.37 + seed as f64 * 1.3).sin())
        .collect();
    FeatureMatrix::new(frames, dim, values).unwrap()
}

pub fn one_hot(tokens: &[usize], vocab: usize) -> Tensor {
    let mut t = Tensor::zeros(&[tokens.len(), vocab]);
    for (j, &k) in tokens.iter().enumerate() {
        t.data_mut()[j * vocab + k] = 1.0;
    }
    t
}

pub fn small_model() -> ModelConfig {
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

/// Random utterances of 1 to 3 content tokens, three frames per token.
pub fn utterances(cfg: &ModelConfig, n: usize, seed: u64) -> Vec<Utterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(1..=3);
            let content: Vec<usize> = (0..len).map(|_| rng.gen_range(FIRST_CONTENT..cfg.vocab_size)).collect();
            let frames = 3 * len + 1;
            let values = (0..frames * cfg.feature_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Utterance {
                id: format!("u{seed}-{i}"),
                features: FeatureMatrix::new(frames, cfg.feature_dim, values).unwrap(),
                tokens: TokenSequence::terminated(&content),
            }
        })
        .collect()
}

/// No augmentation and no dropout.
pub fn plain_train() -> TrainConfig {
    TrainConfig {
        dropout_p: 0.0,
        labeled_augment: AugmentPolicy::IDENTITY,
        unlabeled_augment: AugmentPolicy::IDENTITY,
        ..TrainConfig::default()
    }
}

/// Strong augmentation on both branches and dropout, for a 6-wide model.
pub fn noisy_train() -> TrainConfig {
    let strong = preset("strong", small_model().feature_dim).unwrap();
    TrainConfig {
        dropout_p: 0.3,
        labeled_augment: strong,
        unlabeled_augment: strong,
        label_augment: preset("weak", small_model().feature_dim).unwrap(),
        ..TrainConfig::default()
    }
}
