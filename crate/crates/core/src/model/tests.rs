use std::collections::BTreeSet;

use super::*;
use crate::numerics::{finite_difference_check, Tape, Tensor, Var};
use crate::sequence::{FeatureMatrix, TokenSequence, EOS};

fn small_config() -> ModelConfig {
    ModelConfig {
        feature_dim: 4,
        frontend_dim: 6,
        encoder_layers: 2,
        encoder_units: 5,
        decimation_after: BTreeSet::from([0]),
        decoder_layers: 1,
        decoder_units: 7,
        vocab_size: 6,
        embedding_dim: 3,
        attention_dim: 4,
        dropout_p: 0.3,
        ..ModelConfig::default()
    }
}

fn features(frames: usize, dim: usize, seed: u64) -> FeatureMatrix {
    let values = (0..frames * dim)
        .map(|i| (i as f64 * 0.37 + seed as f64).sin())
        .collect();
    FeatureMatrix::new(frames, dim, values).unwrap()
}

#[test]
fn decimation_factor_eight_with_ceiling() {
    let cfg = ModelConfig {
        encoder_layers: 4,
        decimation_after: BTreeSet::from([0, 1, 2]),
        ..small_config()
    };
    let p = ModelParams::init(&cfg, 1).unwrap();
    let e16 = encode(&p, &features(16, 4, 0), &mut Dropout::Off).unwrap();
    assert_eq!(e16.len(), 2);
    assert_eq!(e16.states.shape(), &[2, 10]);
    let e17 = encode(&p, &features(17, 4, 0), &mut Dropout::Off).unwrap();
    assert_eq!(e17.len(), 3);
    let err = encode(&p, &features(7, 4, 0), &mut Dropout::Off).unwrap_err();
    assert!(matches!(err, crate::Error::UtteranceTooShort { frames: 7, factor: 8, .. }));
}

#[test]
fn conv_frontend_encodes() {
    let cfg = ModelConfig {
        frontend: Frontend::ConvStack,
        ..small_config()
    };
    let p = ModelParams::init(&cfg, 1).unwrap();
    let e = encode(&p, &features(9, 4, 0), &mut Dropout::Off).unwrap();
    assert_eq!(e.len(), 5);
}

#[test]
fn wrong_feature_width_rejected() {
    let p = ModelParams::init(&small_config(), 1).unwrap();
    assert!(encode(&p, &features(8, 5, 0), &mut Dropout::Off).is_err());
}

#[test]
fn dropout_is_seed_deterministic() {
    let p = ModelParams::init(&small_config(), 1).unwrap();
    let x = features(10, 4, 2);
    let a = encode(&p, &x, &mut Dropout::on(0.3, 9)).unwrap();
    let b = encode(&p, &x, &mut Dropout::on(0.3, 9)).unwrap();
    let c = encode(&p, &x, &mut Dropout::on(0.3, 10)).unwrap();
    let clean = encode(&p, &x, &mut Dropout::Off).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_ne!(a, clean);
}

#[test]
fn single_encoder_state_gets_all_attention() {
    let cfg = ModelConfig {
        encoder_layers: 1,
        decimation_after: BTreeSet::new(),
        ..small_config()
    };
    let p = ModelParams::init(&cfg, 4).unwrap();
    let enc = encode(&p, &features(1, 4, 0), &mut Dropout::Off).unwrap();
    let out = decoder_step(&p, &DecoderState::initial(&cfg), crate::sequence::SOS, &enc, &mut Dropout::Off).unwrap();
    assert_eq!(out.attention, vec![1.0]);
}

#[test]
fn posteriors_normalize_over_large_vocab() {
    let cfg = ModelConfig {
        vocab_size: 2000,
        ..small_config()
    };
    let p = ModelParams::init(&cfg, 4).unwrap();
    let enc = encode(&p, &features(6, 4, 0), &mut Dropout::Off).unwrap();
    let out = decoder_step(&p, &DecoderState::initial(&cfg), crate::sequence::SOS, &enc, &mut Dropout::Off).unwrap();
    assert_eq!(out.posteriors.len(), 2000);
    assert!((out.posteriors.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    assert!((out.attention.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    let again = decoder_step(&p, &DecoderState::initial(&cfg), crate::sequence::SOS, &enc, &mut Dropout::Off).unwrap();
    assert_eq!(out, again);
}

#[test]
fn teacher_forcing_equals_stepwise_fold_bit_exactly() {
    let cfg = small_config();
    let p = ModelParams::init(&cfg, 5).unwrap();
    let x = features(11, 4, 3);
    let y = TokenSequence::terminated(&[2, 5, 3, 3]);
    let matrix = forward_teacher_forced(&p, &x, &y, &mut Dropout::on(0.3, 77)).unwrap();

    let mut drop = Dropout::on(0.3, 77);
    let enc = encode(&p, &x, &mut drop).unwrap();
    let mut state = DecoderState::initial(&cfg);
    for (j, prev) in y.decoder_inputs().into_iter().enumerate() {
        let out = decoder_step(&p, &state, prev, &enc, &mut drop).unwrap();
        assert_eq!(matrix.row_slice(j), out.posteriors.as_slice(), "row {j}");
        state = out.state;
    }
}

#[test]
fn teacher_forcing_shapes_and_errors() {
    let cfg = small_config();
    let p = ModelParams::init(&cfg, 5).unwrap();
    let x = features(8, 4, 3);
    let m = forward_teacher_forced(&p, &x, &TokenSequence::new(vec![EOS]), &mut Dropout::Off).unwrap();
    assert_eq!(m.shape(), &[1, 6]);
    assert!((m.data().iter().sum::<f64>() - 1.0).abs() < 1e-6);
    assert!(forward_teacher_forced(&p, &x, &TokenSequence::default(), &mut Dropout::Off).is_err());
}

/// Cross-entropy of the full model against `tokens` built from leaf vars.
fn model_loss(params: &ModelParams, tape: &mut Tape, vars: &[Var], x: &FeatureMatrix, y: &TokenSequence, seed: Option<u64>) -> Var {
    let bp = params.bind_vars(vars.to_vec());
    let cfg = params.config();
    let mut drop = match seed {
        Some(s) => Dropout::on(cfg.dropout_p, s),
        None => Dropout::Off,
    };
    let enc = encode_graph(tape, &bp, cfg, x, &mut drop).unwrap();
    let rows = teacher_forced_graph(tape, &bp, cfg, &enc, y, &mut drop).unwrap();
    let logits = tape.concat(&rows, 0);
    let logp = tape.log_softmax(logits);
    let mut target = Tensor::zeros(&[y.len(), cfg.vocab_size]);
    for (j, &t) in y.tokens().iter().enumerate() {
        target.data_mut()[j * cfg.vocab_size + t] = 1.0;
    }
    let target = tape.constant(target);
    let picked = tape.mul(logp, target);
    let total = tape.sum(picked);
    tape.scale(total, -1.0)
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let cfg = ModelConfig {
        feature_dim: 8,
        frontend_dim: 4,
        encoder_layers: 1,
        encoder_units: 3,
        decimation_after: BTreeSet::new(),
        decoder_units: 4,
        vocab_size: 8,
        embedding_dim: 3,
        attention_dim: 3,
        dropout_p: 0.3,
        ..ModelConfig::default()
    };
    let p = ModelParams::random(&cfg, 11, 0.5).unwrap();
    let x = features(5, 8, 1);
    let y = TokenSequence::terminated(&[3, 7]);
    let leaves: Vec<Tensor> = p.iter().map(|(_, t)| t.clone()).collect();
    let err = finite_difference_check(|tape, vars| model_loss(&p, tape, vars, &x, &y, Some(42)), &leaves, 1e-4).unwrap();
    assert!(err < 1e-3, "max relative error {err}");
}

#[test]
fn single_step_gradients_match_finite_differences() {
    let cfg = small_config();
    let p = ModelParams::random(&cfg, 12, 0.5).unwrap();
    let x = features(6, 4, 1);
    let y = TokenSequence::new(vec![4]);
    let leaves: Vec<Tensor> = p.iter().map(|(_, t)| t.clone()).collect();
    let err = finite_difference_check(|tape, vars| model_loss(&p, tape, vars, &x, &y, None), &leaves, 1e-4).unwrap();
    assert!(err < 1e-3, "max relative error {err}");
}

