//! Noisy Student: a frozen teacher supplies soft targets on weakly augmented
//! input while a fresh student trains on labeled plus pseudo-labeled data.
//!
//! Run with `--release`.

use seqssl::augment::AugmentPolicy;
use seqssl::decode::{score_dataset, BeamConfig};
use seqssl::model::{ModelConfig, ModelParams};
use seqssl::pseudolabel::{attach, generate_pt_offline, LoopFilter};
use seqssl::synthdata::{generate_corpus, split_paper_protocol, CorpusConfig, SplitConfig};
use seqssl::train::{fit, LabelKind, PtNoise, SslMode, TrainConfig, TrainData};

fn main() -> seqssl::Result<()> {
    let corpus = generate_corpus(&CorpusConfig {
        corpus_size: 1000,
        ..CorpusConfig::default()
    })?;
    let splits = split_paper_protocol(
        &corpus,
        &SplitConfig {
            ratios: (0.4, 0.6, 0.0),
            test_size: 100,
            validation_size: 100,
        },
    )?;
    let mcfg = ModelConfig::default();
    let base_cfg = TrainConfig {
        max_epochs: 10,
        labeled_augment: AugmentPolicy::IDENTITY,
        unlabeled_augment: AugmentPolicy::IDENTITY,
        ..TrainConfig::default()
    };
    let labeled_only = TrainData {
        labeled: &splits.labeled.utterances,
        unlabeled: &[],
        validation: &splits.validation.utterances,
    };
    let teacher = fit(ModelParams::init(&mcfg, 1)?, &labeled_only, &base_cfg, None, &mut |_| Ok(()))?.params;
    let beam = BeamConfig::default();
    println!("teacher test WER {:.2}%", score_dataset(&teacher, &splits.test.utterances, &beam)?.wer);

    let unlabeled = splits.unlabeled1.unlabeled_view();
    let generation = generate_pt_offline(&teacher, &unlabeled, &beam, &LoopFilter::default())?;
    let pseudo = attach(&unlabeled, &generation.records);
    let fingerprint = teacher.fingerprint();

    for (kind, noise) in [(LabelKind::Hard, PtNoise::None), (LabelKind::Soft, PtNoise::WeakSa)] {
        let cfg = TrainConfig {
            ssl_mode: SslMode::NoisyStudent,
            pt_label_kind: kind,
            pt_noise: noise,
            batch_size_labeled: 8,
            batch_size_unlabeled: 8,
            ..base_cfg.clone()
        };
        let data = TrainData {
            unlabeled: &pseudo,
            ..labeled_only
        };
        let student = fit(ModelParams::init(&mcfg, 2)?, &data, &cfg, Some(&teacher), &mut |_| Ok(()))?;
        println!(
            "student ({} labels, teacher noise {}): test WER {:.2}%",
            kind.name(),
            noise.name(),
            score_dataset(&student.params, &splits.test.utterances, &beam)?.wer
        );
    }
    println!("teacher unchanged: {}", teacher.fingerprint() == fingerprint);
    Ok(())
}
