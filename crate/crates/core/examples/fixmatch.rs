//! FixMatch on pseudo-transcriptions: a supervised model transcribes the
//! unlabeled tranche offline, then training continues from it with targets
//! recomputed on weakly augmented input at every step.
//!
//! Run with `--release`.

use seqssl::augment::AugmentPolicy;
use seqssl::decode::{score_dataset, BeamConfig};
use seqssl::model::{ModelConfig, ModelParams};
use seqssl::pseudolabel::{attach, generate_pt_offline, LoopFilter};
use seqssl::synthdata::{generate_corpus, split_paper_protocol, CorpusConfig, SplitConfig};
use seqssl::train::{fit, LabelKind, SslMode, TrainConfig, TrainData};

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
    let supervised = TrainConfig {
        max_epochs: 10,
        labeled_augment: AugmentPolicy::IDENTITY,
        ..TrainConfig::default()
    };
    let labeled_only = TrainData {
        labeled: &splits.labeled.utterances,
        unlabeled: &[],
        validation: &splits.validation.utterances,
    };
    let base = fit(ModelParams::init(&ModelConfig::default(), 1)?, &labeled_only, &supervised, None, &mut |_| Ok(()))?;
    let beam = BeamConfig::default();
    println!("supervised test WER {:.2}%", score_dataset(&base.params, &splits.test.utterances, &beam)?.wer);

    let unlabeled = splits.unlabeled1.unlabeled_view();
    let generation = generate_pt_offline(&base.params, &unlabeled, &beam, &LoopFilter::default())?;
    println!(
        "pseudo-transcribed {} utterances ({} loop-rejected)",
        generation.records.len(),
        generation.loop_rejected.len()
    );
    let pseudo = attach(&unlabeled, &generation.records);

    for threshold in [0.0, 0.9] {
        let cfg = TrainConfig {
            ssl_mode: SslMode::FixMatch,
            pt_label_kind: LabelKind::Hard,
            confidence_threshold: threshold,
            max_epochs: 4,
            ..supervised.clone()
        };
        let data = TrainData {
            unlabeled: &pseudo,
            ..labeled_only
        };
        let mut selected = Vec::new();
        let out = fit(base.params.clone(), &data, &cfg, None, &mut |r| {
            selected.extend(r.selected_fraction);
            Ok(())
        })?;
        let mean = selected.iter().sum::<f64>() / selected.len() as f64;
        println!(
            "FixMatch C={threshold}: mean selected fraction {mean:.3}, test WER {:.2}%",
            score_dataset(&out.params, &splits.test.utterances, &beam)?.wer
        );
    }
    Ok(())
}
