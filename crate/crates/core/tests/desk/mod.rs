//! The desk-scale protocol behind criteria 7 to 9, run through the shipped
//! recipes and the same pipeline stages as the command-line tool.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use seqssl::config::KvDocument;
use seqssl::experiment::{self, ExperimentConfig};
use seqssl::model::ModelParams;
use seqssl::pseudolabel::{attach, PTRecord, PseudoLabeled, PtSource};
use seqssl::train::{fit, LabelKind, PtNoise, SslMode, TrainData};

use crate::common;
use crate::Verdict;

const SEEDS: [u64; 3] = [0, 1, 2];

type Row = (u32, &'static str, Verdict, Duration);

struct Desk {
    root: PathBuf,
    data: PathBuf,
}

impl Desk {
    fn config(&self, recipe: &str, seed: u64, out: &Path, extra: &[(&str, String)]) -> ExperimentConfig {
        let mut doc = KvDocument::default();
        doc.push("experiment.recipe", recipe);
        doc.push("experiment.seed", seed.to_string());
        doc.push("experiment.data_dir", self.data.display().to_string());
        doc.push("experiment.output", out.display().to_string());
        for (k, v) in extra {
            doc.push(*k, v.clone());
        }
        ExperimentConfig::from_document(&doc).unwrap()
    }

    fn dir(&self, seed: u64, name: &str) -> PathBuf {
        let d = self.root.join(format!("seed{seed}")).join(name);
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    /// Train with `recipe`, then score the best checkpoint on the test set.
    fn train_and_score(&self, recipe: &str, seed: u64, extra: &[(&str, String)]) -> Run {
        let out = self.dir(seed, recipe);
        let t = Instant::now();
        let cfg = self.config(recipe, seed, &out, extra);
        let trained = experiment::train(&cfg, &out).unwrap();
        let ckpt = out.join("model.ckpt");
        let mut eval_cfg = cfg.clone();
        eval_cfg.checkpoint = Some(ckpt.clone());
        let eval = experiment::evaluate(&eval_cfg, &out).unwrap();
        let run = Run {
            wer: eval.report.wer,
            ckpt,
            elapsed: t.elapsed(),
            epochs: trained.validation_wer.len(),
        };
        eprintln!(
            "  seed {seed} {recipe:<12} test WER {:6.2}  ({} epochs, best {}, {:.0?})",
            run.wer,
            run.epochs,
            trained.best_epoch,
            run.elapsed
        );
        run
    }

    /// PT store for `tranche` transcribed by `ckpt`.
    fn pt(&self, seed: u64, name: &str, ckpt: &Path, tranche: &str) -> PathBuf {
        let out = self.dir(seed, name);
        let cfg = self.config(
            "baseline-25",
            seed,
            &out,
            &[
                ("experiment.checkpoint", ckpt.display().to_string()),
                ("experiment.tranche", tranche.to_string()),
            ],
        );
        let r = experiment::generate_pt(&cfg, &out).unwrap();
        eprintln!(
            "  seed {seed} PT {tranche} by {name}: kept {}, loop-rejected {}, failed {}, PT WER {:.2}",
            r.kept,
            r.loop_rejected,
            r.decode_failed,
            r.pt_wer.unwrap_or(f64::NAN)
        );
        out.join(format!("pt-{tranche}.tsv"))
    }
}

struct Run {
    wer: f64,
    ckpt: PathBuf,
    elapsed: Duration,
    epochs: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn wrr(base: f64, ssl: f64, oracle: f64) -> f64 {
    seqssl::metrics::wrr(base, ssl, oracle).unwrap_or(f64::NAN)
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(", ")
}

pub fn run(want: &dyn Fn(u32) -> bool) -> Vec<Row> {
    let tmp = tempfile::tempdir().unwrap();
    let desk = Desk {
        root: tmp.path().to_path_buf(),
        data: tmp.path().join("data"),
    };
    std::fs::create_dir_all(&desk.data).unwrap();
    let data_cfg = desk.config("baseline-25", 0, &desk.data, &[]);
    experiment::make_data(&data_cfg, &desk.data).unwrap();

    let mut rows = Vec::new();
    let seeds: &[u64] = if want(8) || want(9) { &SEEDS } else { &SEEDS[..1] };
    let mut oracle = Vec::new();
    let mut baseline = Vec::new();
    let mut hard = Vec::new();
    let mut soft_sa = Vec::new();
    let mut round2 = Vec::new();
    let mut c8_time = Duration::ZERO;
    let mut c9_time = Duration::ZERO;

    for &seed in seeds {
        let o = desk.train_and_score("oracle", seed, &[]);
        if seed == 0 && want(7) {
            let limit = Duration::from_secs(30 * 60);
            rows.push((
                7,
                "supervised sanity",
                Verdict::new(
                    o.wer <= 5.0 && o.elapsed <= limit,
                    format!(
                        "2000 labeled utterances: test WER {:.2}% (limit 5%) after {} epochs in {:.1?} (limit 30 min)",
                        o.wer, o.epochs, o.elapsed
                    ),
                ),
                o.elapsed,
            ));
        }
        if !(want(8) || want(9)) {
            break;
        }
        let t8 = Instant::now();
        let b = desk.train_and_score("baseline-25", seed, &[]);
        let pt1 = desk.pt(seed, "baseline-pt", &b.ckpt, "unlabeled-1");
        let teacher_hash = ModelParams::load(&b.ckpt).unwrap().fingerprint();
        let with_teacher = |ckpt: &Path, stores: Vec<&PathBuf>| {
            vec![
                ("experiment.teacher", ckpt.display().to_string()),
                (
                    "experiment.pt_store",
                    stores.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","),
                ),
            ]
        };
        let h = desk.train_and_score("ns-hard", seed, &with_teacher(&b.ckpt, vec![&pt1]));
        let n = desk.train_and_score("ns-soft-sa", seed, &with_teacher(&b.ckpt, vec![&pt1]));
        assert_eq!(
            ModelParams::load(&b.ckpt).unwrap().fingerprint(),
            teacher_hash,
            "teacher checkpoint changed"
        );
        c8_time += t8.elapsed() + o.elapsed;

        if want(9) {
            let t9 = Instant::now();
            let r1 = desk.pt(seed, "round1-pt", &n.ckpt, "unlabeled-1");
            let r2 = desk.pt(seed, "round1-pt", &n.ckpt, "unlabeled-2");
            let second = desk.train_and_score("ns-round2", seed, &with_teacher(&n.ckpt, vec![&r1, &r2]));
            round2.push(second.wer);
            c9_time += t9.elapsed();
        }
        oracle.push(o.wer);
        baseline.push(b.wer);
        hard.push(h.wer);
        soft_sa.push(n.wer);
    }

    if want(8) {
        let w_hard: Vec<f64> = (0..seeds.len()).map(|i| wrr(baseline[i], hard[i], oracle[i])).collect();
        let w_soft: Vec<f64> = (0..seeds.len()).map(|i| wrr(baseline[i], soft_sa[i], oracle[i])).collect();
        let (mh, ms) = (median(w_hard.clone()), median(w_soft.clone()));
        let limit = Duration::from_secs(3 * 3600);
        rows.push((
            8,
            "SSL recovery structure",
            Verdict::new(
                mh > 0.0 && ms >= mh + 15.0 && c8_time <= limit,
                format!(
                    "WER baseline [{}], oracle [{}], hard PT [{}], NS soft+weak-SA [{}]; \
                     WRR hard [{}] median {mh:.1}, NS [{}] median {ms:.1} (need > 0 and a 15-point lead)",
                    fmt(&baseline),
                    fmt(&oracle),
                    fmt(&hard),
                    fmt(&soft_sa),
                    fmt(&w_hard),
                    fmt(&w_soft)
                ),
            ),
            c8_time,
        ));
    }
    if want(9) {
        let (m1, m2) = (median(soft_sa.clone()), median(round2.clone()));
        rows.push((
            9,
            "iterative gain structure",
            Verdict::new(
                m2 <= m1,
                format!(
                    "round 1 WER [{}] median {m1:.2}, round 2 WER [{}] median {m2:.2}, delta {:+.2} ({:+.1}% relative)",
                    fmt(&soft_sa),
                    fmt(&round2),
                    m2 - m1,
                    100.0 * (m2 - m1) / m1
                ),
            ),
            c9_time,
        ));
    }
    rows
}

/// Fingerprint of a teacher before and after short Noisy Student runs in
/// every label and noise setting.
pub fn teacher_immutability() -> (bool, String) {
    let cfg = common::small_model();
    let teacher = ModelParams::random(&cfg, 31, 0.5).unwrap();
    let before = teacher.fingerprint();
    let labeled = common::utterances(&cfg, 6, 1);
    let validation = common::utterances(&cfg, 3, 2);
    let unlabeled_src = common::utterances(&cfg, 6, 3);
    let records: Vec<PTRecord> = unlabeled_src
        .iter()
        .map(|u| PTRecord::new(&u.id, u.tokens.clone(), vec![0.9; u.tokens.len()], PtSource::OfflineBeam, "t").unwrap())
        .collect();
    let unlabeled_view: Vec<_> = unlabeled_src.iter().map(|u| u.unlabeled()).collect();
    let pseudo: Vec<PseudoLabeled> = attach(&unlabeled_view, &records);
    let data = TrainData {
        labeled: &labeled,
        unlabeled: &pseudo,
        validation: &validation,
    };
    let mut runs = 0;
    for kind in [LabelKind::Hard, LabelKind::Soft] {
        for noise in [PtNoise::None, PtNoise::Dropout, PtNoise::WeakSa] {
            let tc = seqssl::train::TrainConfig {
                ssl_mode: SslMode::NoisyStudent,
                pt_label_kind: kind,
                pt_noise: noise,
                max_epochs: 1,
                batch_size_labeled: 3,
                batch_size_unlabeled: 3,
                ..common::noisy_train()
            };
            let student = ModelParams::random(&cfg, 32, 0.5).unwrap();
            fit(student, &data, &tc, Some(&teacher), &mut |_| Ok(())).unwrap();
            runs += 1;
        }
    }
    let after = teacher.fingerprint();
    (
        before == after,
        format!("teacher hash {before:016x} unchanged after {runs} Noisy Student runs: {}", before == after),
    )
}
