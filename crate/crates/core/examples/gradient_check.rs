//! Check reverse-mode gradients of the full encoder-decoder loss against
//! central finite differences on a tiny model.

use std::collections::BTreeSet;

use seqssl::model::{encode_graph, teacher_forced_graph, Dropout, ModelConfig, ModelParams};
use seqssl::numerics::{finite_difference_check, Tensor};
use seqssl::sequence::{FeatureMatrix, TokenSequence};

fn main() -> seqssl::Result<()> {
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
    let params = ModelParams::random(&cfg, 11, 0.5)?;
    let x = FeatureMatrix::new(5, 8, (0..40).map(|i| (i as f64 * 0.37).sin()).collect())?;
    let y = TokenSequence::terminated(&[3, 7]);
    let leaves: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();

    // Same dropout seed on every evaluation freezes the masks.
    let loss = |tape: &mut seqssl::numerics::Tape, vars: &[seqssl::numerics::Var]| {
        let bp = params.bind_vars(vars.to_vec());
        let mut drop = Dropout::on(cfg.dropout_p, 42);
        let enc = encode_graph(tape, &bp, &cfg, &x, &mut drop).expect("encode");
        let rows = teacher_forced_graph(tape, &bp, &cfg, &enc, &y, &mut drop).expect("decode");
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
    };

    let start = std::time::Instant::now();
    let err = finite_difference_check(loss, &leaves, 1e-4)?;
    println!(
        "{} parameters, max relative error {err:.2e} ({:.1?})",
        params.num_values(),
        start.elapsed()
    );
    Ok(())
}
