//! Two Noisy Student rounds: the round-1 student becomes the teacher that
//! transcribes both unlabeled tranches in round 2.
//!
//! Run with `--release`.

use seqssl::augment::AugmentPolicy;
use seqssl::decode::{score_dataset, BeamConfig};
use seqssl::model::{ModelConfig, ModelParams};
use seqssl::pseudolabel::{noisy_student_round, LoopFilter, RoundData, StudentInit};
use seqssl::synthdata::{generate_corpus, split_paper_protocol, CorpusConfig, SplitConfig};
use seqssl::train::{fit, LabelKind, PtNoise, TrainConfig, TrainData};

fn main() -> seqssl::Result<()> {
    let corpus = generate_corpus(&CorpusConfig {
        corpus_size: 1000,
        ..CorpusConfig::default()
    })?;
    let splits = split_paper_protocol(
        &corpus,
        &SplitConfig {
            ratios: (0.3, 0.3, 0.4),
            test_size: 100,
            validation_size: 100,
        },
    )?;
    let mcfg = ModelConfig::default();
    let cfg = TrainConfig {
        max_epochs: 8,
        labeled_augment: AugmentPolicy::IDENTITY,
        unlabeled_augment: AugmentPolicy::IDENTITY,
        pt_label_kind: LabelKind::Soft,
        pt_noise: PtNoise::WeakSa,
        ..TrainConfig::default()
    };
    let labeled_only = TrainData {
        labeled: &splits.labeled.utterances,
        unlabeled: &[],
        validation: &splits.validation.utterances,
    };
    let teacher = fit(ModelParams::init(&mcfg, 1)?, &labeled_only, &cfg, None, &mut |_| Ok(()))?.params;
    let beam = BeamConfig::default();
    println!("supervised test WER {:.2}%", score_dataset(&teacher, &splits.test.utterances, &beam)?.wer);

    let tranches = vec![splits.unlabeled1.unlabeled_view(), splits.unlabeled2.unlabeled_view()];
    let data = RoundData {
        labeled: &splits.labeled.utterances,
        validation: &splits.validation.utterances,
        tranches: &tranches,
    };
    let outcome = noisy_student_round(
        &teacher,
        data,
        2,
        &cfg,
        &beam,
        &LoopFilter::default(),
        &StudentInit::Fresh { seed: 7 },
        &mut |_, _| Ok(()),
    )?;
    for (r, round) in outcome.rounds.iter().enumerate() {
        println!(
            "round {}: teacher {}, {} pseudo-transcriptions, test WER {:.2}%",
            r + 1,
            round.teacher_id,
            round.generation.records.len(),
            score_dataset(&round.fit.params, &splits.test.utterances, &beam)?.wer
        );
    }
    Ok(())
}
