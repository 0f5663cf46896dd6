//! Iterative self-training: the current model re-decodes each unlabeled
//! utterance with a narrow beam every time it is sampled.
//!
//! Run with `--release`.

use seqssl::augment::AugmentPolicy;
use seqssl::decode::{score_dataset, BeamConfig};
use seqssl::model::{ModelConfig, ModelParams};
use seqssl::pseudolabel::{attach, generate_pt_offline, LoopFilter};
use seqssl::synthdata::{generate_corpus, split_paper_protocol, CorpusConfig, SplitConfig};
use seqssl::train::{fit, SslMode, TrainConfig, TrainData};

fn main() -> seqssl::Result<()> {
    let corpus = generate_corpus(&CorpusConfig {
        corpus_size: 900,
        ..CorpusConfig::default()
    })?;
    let splits = split_paper_protocol(
        &corpus,
        &SplitConfig {
            ratios: (0.5, 0.5, 0.0),
            test_size: 100,
            validation_size: 100,
        },
    )?;
    let cfg = TrainConfig {
        max_epochs: 10,
        labeled_augment: AugmentPolicy::IDENTITY,
        ..TrainConfig::default()
    };
    let labeled_only = TrainData {
        labeled: &splits.labeled.utterances,
        unlabeled: &[],
        validation: &splits.validation.utterances,
    };
    let base = fit(ModelParams::init(&ModelConfig::default(), 1)?, &labeled_only, &cfg, None, &mut |_| Ok(()))?.params;
    let beam = BeamConfig::default();
    println!("supervised test WER {:.2}%", score_dataset(&base, &splits.test.utterances, &beam)?.wer);

    let unlabeled = splits.unlabeled1.unlabeled_view();
    let seed_pt = generate_pt_offline(&base, &unlabeled, &beam, &LoopFilter::default())?;
    let pseudo = attach(&unlabeled, &seed_pt.records);
    let iter_cfg = TrainConfig {
        ssl_mode: SslMode::IterativeSelfTraining,
        iterative_beam_width: 4,
        max_epochs: 3,
        ..cfg
    };
    let data = TrainData {
        unlabeled: &pseudo,
        ..labeled_only
    };
    let mut fallbacks = 0;
    let out = fit(base, &data, &iter_cfg, None, &mut |r| {
        fallbacks += r.pt_fallbacks;
        Ok(())
    })?;
    println!(
        "iterative self-training: test WER {:.2}%, {fallbacks} re-decodes fell back to the stored transcription",
        score_dataset(&out.params, &splits.test.utterances, &beam)?.wer
    );
    Ok(())
}
