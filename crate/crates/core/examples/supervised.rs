//! Train an encoder-decoder on a small labeled split and decode the test set.
//!
//! Run with `--release`; it takes about a minute.

use seqssl::decode::{decode_utterance, score_dataset, BeamConfig};
use seqssl::model::{ModelConfig, ModelParams};
use seqssl::synthdata::{generate_corpus, split_paper_protocol, CorpusConfig, SplitConfig};
use seqssl::train::{fit, TrainConfig, TrainData};

fn main() -> seqssl::Result<()> {
    let corpus = generate_corpus(&CorpusConfig {
        corpus_size: 1200,
        ..CorpusConfig::default()
    })?;
    let splits = split_paper_protocol(
        &corpus,
        &SplitConfig {
            ratios: (0.5, 0.25, 0.25),
            test_size: 100,
            validation_size: 100,
        },
    )?;
    let cfg = TrainConfig {
        max_epochs: 12,
        labeled_augment: seqssl::augment::AugmentPolicy::IDENTITY,
        ..TrainConfig::default()
    };
    let data = TrainData {
        labeled: &splits.labeled.utterances,
        unlabeled: &[],
        validation: &splits.validation.utterances,
    };
    let init = ModelParams::init(&ModelConfig::default(), 1)?;
    println!("{} parameters, {} training utterances", init.num_values(), data.labeled.len());
    let outcome = fit(init, &data, &cfg, None, &mut |r| {
        if let Some(w) = r.validation_wer {
            println!("epoch {:>2}  step {:>4}  validation WER {w:6.2}", r.epoch + 1, r.step);
        }
        Ok(())
    })?;

    let beam = BeamConfig::default();
    let report = score_dataset(&outcome.params, &splits.test.utterances, &beam)?;
    println!(
        "best epoch {}, test WER {:.2}% (S {} D {} I {})",
        outcome.best_epoch,
        report.wer,
        report.substitutions,
        report.deletions,
        report.insertions
    );
    let utt = &splits.test.utterances[0];
    let ranked = decode_utterance(&outcome.params, &utt.features, &beam)?;
    println!("reference  {}", utt.tokens);
    for h in ranked.iter().take(3) {
        println!("hypothesis {}  (score {:.3})", h.tokens, h.score);
    }
    Ok(())
}
