//! Acceptance criteria, one line each. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --release --test acceptance -- 2 3`.
//! Exits nonzero if any selected criterion fails.

mod common;
mod desk;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqssl::augment::{preset, spec_augment, spec_augment_with, AugmentPolicy, MaskAxis};
use seqssl::decode::{beam_search, sequence_score, BeamConfig, Seq2SeqStep, StepModel, StepScores};
use seqssl::metrics::{edit_distance_align, werr, wrr};
use seqssl::model::{decoder_step, encode, encode_graph, teacher_forced_graph, DecoderState, Dropout, ModelConfig, ModelParams};
use seqssl::numerics::{finite_difference_check, Tape, Tensor, Var};
use seqssl::pseudolabel::{fixmatch_labels, LabelKind, LabelMatrix, PTRecord, PseudoLabeled, PtSource};
use seqssl::sequence::{FeatureMatrix, TokenSequence, EOS, SOS};
use seqssl::train::{
    gradient_with_labels, labels_for_batch, supervised_loss, unlabeled_loss, Batch, PtNoise, SslMode, TrainConfig,
};

pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn c1_gradients() -> Verdict {
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
    let mut worst: f64 = 0.0;
    for seed in 0..3u64 {
        let params = ModelParams::random(&cfg, 100 + seed, 0.5).unwrap();
        let x = common::features(5 + seed as usize, 8, seed);
        let y = TokenSequence::terminated(&[2 + seed as usize, 7]);
        let leaves: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
        let loss = |tape: &mut Tape, vars: &[Var]| {
            let bp = params.bind_vars(vars.to_vec());
            // A fixed seed replays the same dropout masks on every evaluation.
            let mut drop = Dropout::on(cfg.dropout_p, 42 + seed);
            let enc = encode_graph(tape, &bp, &cfg, &x, &mut drop).unwrap();
            let rows = teacher_forced_graph(tape, &bp, &cfg, &enc, &y, &mut drop).unwrap();
            let logits = tape.concat(&rows, 0);
            let logp = tape.log_softmax(logits);
            let target = tape.constant(common::one_hot(y.tokens(), cfg.vocab_size));
            let picked = tape.mul(logp, target);
            let total = tape.sum(picked);
            tape.scale(total, -1.0)
        };
        worst = worst.max(finite_difference_check(loss, &leaves, 1e-4).unwrap());
    }
    Verdict::new(worst < 1e-3, format!("max relative error {worst:.2e} over 3 models (limit 1e-3)"))
}

fn c2_metrics() -> Verdict {
    let a = wrr(16.77, 15.60, 14.87).unwrap();
    let b = wrr(16.77, 15.02, 14.87).unwrap();
    let c = werr(16.77, 15.22).unwrap();
    let pass = (a - 61.6).abs() <= 0.05 && (b - 92.1).abs() <= 0.05 && (c - 9.2).abs() <= 0.05;
    Verdict::new(pass, format!("WRR {a:.3}, {b:.3}; WERR {c:.3} (want 61.6, 92.1, 9.2 within 0.05)"))
}

/// Every string over `{0, 1, 2}` of length at most `max_len`.
fn all_strings(max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for c in 0..3u8 {
                let mut t: Vec<u8> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Fewest single-token edits turning `source` into each string, found by
/// breadth-first search over the strings themselves. Deletions can always
/// be done first and insertions last, so paths never need strings longer
/// than `max_len`.
fn edit_graph_distances(source: &[u8], index: &HashMap<Vec<u8>, usize>, max_len: usize) -> Vec<u32> {
    let mut dist = vec![u32::MAX; index.len()];
    let mut queue = VecDeque::new();
    dist[index[source]] = 0;
    queue.push_back(source.to_vec());
    while let Some(s) = queue.pop_front() {
        let d = dist[index[&s]];
        let mut visit = |t: Vec<u8>, queue: &mut VecDeque<Vec<u8>>| {
            let i = index[&t];
            if dist[i] == u32::MAX {
                dist[i] = d + 1;
                queue.push_back(t);
            }
        };
        for p in 0..s.len() {
            let mut t = s.clone();
            t.remove(p);
            visit(t, &mut queue);
            for c in 0..3u8 {
                if c != s[p] {
                    let mut t = s.clone();
                    t[p] = c;
                    visit(t, &mut queue);
                }
            }
        }
        if s.len() < max_len {
            for p in 0..=s.len() {
                for c in 0..3u8 {
                    let mut t = s.clone();
                    t.insert(p, c);
                    visit(t, &mut queue);
                }
            }
        }
    }
    dist
}

fn c3_wer_oracle() -> Verdict {
    let strings = all_strings(6);
    let index: HashMap<Vec<u8>, usize> = strings.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let mut pairs = 0usize;
    let mut mismatches = 0usize;
    for r in strings.iter().filter(|s| !s.is_empty()) {
        let dist = edit_graph_distances(r, &index, 6);
        for (h, &d) in strings.iter().zip(&dist) {
            let rep = edit_distance_align(r, h).unwrap();
            let consistent = rep.errors() == d as usize
                && rep.reference_length == r.len()
                && r.len() + rep.insertions - rep.deletions == h.len();
            pairs += 1;
            mismatches += usize::from(!consistent);
        }
    }
    Verdict::new(
        mismatches == 0,
        format!("{pairs} pairs checked against breadth-first edit search, {mismatches} mismatches"),
    )
}

/// Random decoder over a tiny vocabulary: posteriors and attention are
/// pseudo-random functions of the emitted prefix.
struct RandomDecoder {
    vocab: usize,
    encoder_len: usize,
    seed: u64,
}

impl RandomDecoder {
    fn rng_for(&self, prefix: &[usize]) -> ChaCha8Rng {
        let mut h = self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        for &t in prefix {
            h = (h ^ (t as u64 + 1)).wrapping_mul(0x0100_0000_01b3);
        }
        ChaCha8Rng::seed_from_u64(h)
    }
}

impl StepModel for RandomDecoder {
    type State = Vec<usize>;

    fn initial_state(&self) -> Vec<usize> {
        Vec::new()
    }

    fn encoder_len(&self) -> usize {
        self.encoder_len
    }

    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn step(&self, prefix: &Vec<usize>, prev: usize) -> seqssl::Result<StepScores<Vec<usize>>> {
        let mut rng = self.rng_for(prefix);
        let logits: Vec<f64> = (0..self.vocab).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let z = logits.iter().map(|l| l.exp()).sum::<f64>().ln();
        let raw: Vec<f64> = (0..self.encoder_len).map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut next = prefix.clone();
        next.push(prev);
        Ok(StepScores {
            log_posteriors: logits.iter().map(|l| l - z).collect(),
            attention: raw.iter().map(|a| a / total).collect(),
            state: next,
        })
    }
}

/// Best complete sequence by exhaustive enumeration: every token string
/// that ends in EOS, has no earlier EOS and fits the length cap.
fn brute_force_best<M: StepModel>(model: &M, cfg: &BeamConfig) -> Option<(Vec<usize>, f64)> {
    let cap = cfg.max_len(model.encoder_len());
    let mut best: Option<(Vec<usize>, f64)> = None;
    // (tokens, state, log_prob, attention sums)
    let mut stack = vec![(Vec::new(), model.initial_state(), 0.0, vec![0.0; model.encoder_len()])];
    while let Some((tokens, state, lp, acc)) = stack.pop() {
        if tokens.len() == cap {
            continue;
        }
        let prev = tokens.last().copied().unwrap_or(SOS);
        let out = model.step(&state, prev).unwrap();
        let acc2: Vec<f64> = acc.iter().zip(&out.attention).map(|(a, b)| a + b).collect();
        for k in (0..model.vocab_size()).filter(|&k| k != SOS) {
            let mut t = tokens.clone();
            t.push(k);
            let lp2 = lp + out.log_posteriors[k];
            if k == EOS {
                let s = sequence_score(lp2, &acc2, t.len(), cfg);
                let better = match &best {
                    None => true,
                    Some((bt, bs)) => s > *bs || (s == *bs && t < *bt),
                };
                if better {
                    best = Some((t, s));
                }
            } else {
                stack.push((t, out.state.clone(), lp2, acc2.clone()));
            }
        }
    }
    best
}

fn greedy(params: &ModelParams, x: &FeatureMatrix, cap: usize) -> Option<Vec<usize>> {
    let enc = encode(params, x, &mut Dropout::Off).unwrap();
    let mut state = DecoderState::initial(params.config());
    let mut prev = SOS;
    let mut out = Vec::new();
    for _ in 0..cap {
        let step = decoder_step(params, &state, prev, &enc, &mut Dropout::Off).unwrap();
        let mut best = EOS;
        for k in (0..step.log_posteriors.len()).filter(|&k| k != SOS) {
            if step.log_posteriors[k] > step.log_posteriors[best] {
                best = k;
            }
        }
        out.push(best);
        if best == EOS {
            return Some(out);
        }
        prev = best;
        state = step.state;
    }
    None
}

fn c4_beam_oracle() -> Verdict {
    let mut instances = 0;
    let mut mismatches = 0;
    let lambdas = [(0.2, 0.0, 1.0), (0.0, 0.0, 0.0), (1.0, 0.5, 2.0), (0.5, -0.3, 0.5)];
    // Tiny real models: vocab 3, two encoder states, cap 4.
    let tiny = ModelConfig {
        feature_dim: 3,
        frontend_dim: 3,
        encoder_layers: 1,
        encoder_units: 2,
        decimation_after: BTreeSet::new(),
        decoder_units: 3,
        vocab_size: 3,
        embedding_dim: 2,
        attention_dim: 2,
        ..ModelConfig::default()
    };
    for seed in 0..60u64 {
        let (lc, lw, lr) = lambdas[seed as usize % lambdas.len()];
        let cfg = BeamConfig {
            beam_width: 81,
            lambda_cov: lc,
            lambda_wip: lw,
            lambda_rlp: lr,
            coverage_tau: 0.5,
            max_len_factor: 2.0,
        };
        let params = ModelParams::random(&tiny, seed, 1.5).unwrap();
        let model = Seq2SeqStep::new(&params, &common::features(2, 3, seed)).unwrap();
        mismatches += usize::from(!beam_matches_brute_force(&model, &cfg));
        instances += 1;
        let toy = RandomDecoder {
            vocab: 2 + (seed as usize % 2),
            encoder_len: 2,
            seed,
        };
        mismatches += usize::from(!beam_matches_brute_force(&toy, &cfg));
        instances += 1;
    }

    let mut greedy_models = 0;
    let mut greedy_mismatches = 0;
    for seed in 0..120u64 {
        let cfg = ModelConfig {
            feature_dim: 5,
            frontend_dim: 4,
            encoder_layers: 1 + (seed as usize % 2),
            encoder_units: 3,
            decimation_after: if seed % 4 == 1 { BTreeSet::from([0]) } else { BTreeSet::new() },
            decoder_units: 5,
            vocab_size: 4 + (seed as usize % 5),
            embedding_dim: 3,
            attention_dim: 3,
            ..ModelConfig::default()
        };
        let params = ModelParams::random(&cfg, 1000 + seed, 0.3 + 0.01 * seed as f64).unwrap();
        let x = common::features(6 + (seed as usize % 5), 5, seed);
        let beam = BeamConfig::unscored(1);
        let enc_len = encode(&params, &x, &mut Dropout::Off).unwrap().len();
        let expected = greedy(&params, &x, beam.max_len(enc_len));
        let got = seqssl::decode::best_hypothesis(&params, &x, &beam)
            .unwrap()
            .map(|h| h.tokens.tokens().to_vec());
        greedy_models += 1;
        greedy_mismatches += usize::from(expected != got);
    }
    Verdict::new(
        mismatches == 0 && greedy_mismatches == 0,
        format!(
            "{instances} exhaustive instances ({mismatches} mismatches), \
             {greedy_models} greedy models ({greedy_mismatches} mismatches)"
        ),
    )
}

fn beam_matches_brute_force<M: StepModel>(model: &M, cfg: &BeamConfig) -> bool {
    let expected = brute_force_best(model, cfg);
    let got = beam_search(model, cfg).ok().map(|r| (r[0].tokens.tokens().to_vec(), r[0].score));
    match (expected, got) {
        (None, None) => true,
        (Some((et, es)), Some((gt, gs))) => et == gt && (es - gs).abs() <= 1e-9 * es.abs().max(1.0),
        _ => false,
    }
}

fn c5_selection() -> Verdict {
    let cfg = common::small_model();
    let params = ModelParams::random(&cfg, 5, 0.8).unwrap();
    let utts = common::utterances(&cfg, 24, 9);
    let mut items = Vec::new();
    let mut labels = Vec::new();
    let mut confs = Vec::new();
    for (i, u) in utts.iter().enumerate() {
        let pt = PTRecord::new(&u.id, u.tokens.clone(), vec![1.0; u.tokens.len()], PtSource::OfflineBeam, "m").unwrap();
        let (m, c) = fixmatch_labels(&params, &u.features, &pt, &preset("weak", cfg.feature_dim).unwrap(), LabelKind::Hard, 0.0, i as u64)
            .unwrap();
        items.push(PseudoLabeled { utterance: u.unlabeled(), pt });
        labels.push(m);
        confs.push(c);
    }
    let mut fractions = Vec::new();
    for c in [0.0, 0.3, 0.5, 0.7, 0.9] {
        let tc = TrainConfig {
            confidence_threshold: c,
            ..common::plain_train()
        };
        fractions.push(unlabeled_loss(&params, &items, &labels, &confs, &tc, 3).unwrap().selected_fraction);
    }
    let monotone = fractions.windows(2).all(|w| w[1] <= w[0]);
    let strictly_informative = fractions[0] > fractions[4];
    let detail = fractions.iter().map(|f| format!("{f:.3}")).collect::<Vec<_>>().join(", ");
    Verdict::new(
        monotone && fractions[0] == 1.0 && strictly_informative,
        format!("selected fraction at C = 0, .3, .5, .7, .9: {detail}"),
    )
}

/// Maximal runs of fully zeroed rows or columns of an all-ones grid.
/// Lengths of zeroed runs along `axis`. A column counts as zeroed when it is
/// zero on every row the other axis left intact; if the other axis wiped
/// everything there is no evidence either way and nothing is reported.
fn zero_runs(x: &FeatureMatrix, axis: MaskAxis) -> Vec<usize> {
    let row_zero: Vec<bool> = (0..x.frames()).map(|t| (0..x.dim()).all(|f| x.get(t, f) == 0.0)).collect();
    let col_zero: Vec<bool> = (0..x.dim()).map(|f| (0..x.frames()).all(|t| x.get(t, f) == 0.0)).collect();
    let zeroed: Vec<bool> = match axis {
        MaskAxis::Time => {
            if col_zero.iter().all(|&z| z) {
                return Vec::new();
            }
            (0..x.frames())
                .map(|t| (0..x.dim()).filter(|&f| !col_zero[f]).all(|f| x.get(t, f) == 0.0))
                .collect()
        }
        MaskAxis::Frequency => {
            if row_zero.iter().all(|&z| z) {
                return Vec::new();
            }
            (0..x.dim())
                .map(|f| (0..x.frames()).filter(|&t| !row_zero[t]).all(|t| x.get(t, f) == 0.0))
                .collect()
        }
    };
    let mut runs = Vec::new();
    let mut cur = 0;
    for z in zeroed.into_iter().chain(std::iter::once(false)) {
        if z {
            cur += 1;
        } else if cur > 0 {
            runs.push(cur);
            cur = 0;
        }
    }
    runs
}

fn c6_spec_augment() -> Verdict {
    let dim = ModelConfig::default().feature_dim;
    let strong = preset("strong", dim).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0;
    let mut widest = (0, 0);
    for i in 0..1000 {
        let frames = 5 + i % 60;
        let x = FeatureMatrix::new(frames, dim, vec![1.0; frames * dim]).unwrap();
        let (y, spans) = spec_augment_with(&x, &strong, &mut rng);
        let count = |a| spans.iter().filter(|s| s.axis == a).count();
        let max_w = |a| spans.iter().filter(|s| s.axis == a).map(|s| s.width).max().unwrap_or(0);
        widest = (widest.0.max(max_w(MaskAxis::Frequency)), widest.1.max(max_w(MaskAxis::Time)));
        let ok_spans = count(MaskAxis::Frequency) <= strong.m_f
            && count(MaskAxis::Time) <= strong.m_t
            && max_w(MaskAxis::Frequency) <= strong.f_max
            && max_w(MaskAxis::Time) <= strong.t_max;
        // From the output alone: zeroed runs are bounded by the combined
        // budget of the masks that may have merged into them.
        let f_runs = zero_runs(&y, MaskAxis::Frequency);
        let t_runs = zero_runs(&y, MaskAxis::Time);
        let ok_output = f_runs.len() <= strong.m_f
            && t_runs.len() <= strong.m_t
            && f_runs.iter().sum::<usize>() <= strong.m_f * strong.f_max
            && t_runs.iter().sum::<usize>() <= strong.m_t * strong.t_max;
        violations += usize::from(!(ok_spans && ok_output));
    }
    let x = common::features(17, dim, 1);
    let identity = (0..200).all(|s| {
        spec_augment(&x, &AugmentPolicy::IDENTITY, s).values().iter().zip(x.values()).all(|(a, b)| a.to_bits() == b.to_bits())
    });
    Verdict::new(
        violations == 0 && identity,
        format!(
            "strong preset {strong}: {violations} violations in 1000 draws, widest masks f {} t {}; zero policy identity: {identity}",
            widest.0, widest.1
        ),
    )
}

fn c10_hard_equivalence() -> Verdict {
    let cfg = common::small_model();
    let params = ModelParams::random(&cfg, 10, 0.5).unwrap();
    let utts = common::utterances(&cfg, 12, 4);
    let tc = TrainConfig {
        confidence_threshold: 0.0,
        ssl_mode: SslMode::NoisyStudent,
        pt_label_kind: LabelKind::Hard,
        pt_noise: PtNoise::None,
        ..common::noisy_train()
    };
    let items: Vec<PseudoLabeled> = utts
        .iter()
        .map(|u| PseudoLabeled {
            utterance: u.unlabeled(),
            pt: PTRecord::new(&u.id, u.tokens.clone(), vec![0.37; u.tokens.len()], PtSource::TeacherHard, "m").unwrap(),
        })
        .collect();
    let labels: Vec<LabelMatrix> = utts.iter().map(|u| LabelMatrix::one_hot(u.tokens.tokens(), cfg.vocab_size).unwrap()).collect();
    let confs: Vec<Vec<f64>> = items.iter().map(|p| p.pt.confidences.clone()).collect();
    let mut equal = 0;
    for seed in 0..5u64 {
        let u = unlabeled_loss(&params, &items, &labels, &confs, &tc, seed).unwrap().loss;
        let s = supervised_loss(&params, &utts, &tc, seed).unwrap();
        equal += usize::from(u.to_bits() == s.to_bits());
    }
    Verdict::new(equal == 5, format!("{equal}/5 seeds bit-equal (augmentation and dropout on)"))
}

fn max_abs_diff(a: &[Tensor], b: &[Tensor]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.data().iter().zip(y.data()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn c11_teacher_and_labels() -> Verdict {
    let (hash_ok, hash_detail) = desk::teacher_immutability();

    // FixMatch: the gradient equals the derivative of the loss with the
    // targets held fixed, and differs from the derivative when the targets
    // are recomputed at the perturbed parameters.
    let cfg = common::small_model();
    let params = ModelParams::random(&cfg, 21, 0.6).unwrap();
    let utts = common::utterances(&cfg, 4, 8);
    let items: Vec<PseudoLabeled> = utts
        .iter()
        .map(|u| PseudoLabeled {
            utterance: u.unlabeled(),
            pt: PTRecord::new(&u.id, u.tokens.clone(), vec![1.0; u.tokens.len()], PtSource::OfflineBeam, "m").unwrap(),
        })
        .collect();
    let tc = TrainConfig {
        ssl_mode: SslMode::FixMatch,
        pt_label_kind: LabelKind::Soft,
        // The student pass must see a different input than the label pass,
        // or soft targets equal the posteriors and the gradient vanishes.
        unlabeled_augment: common::noisy_train().unlabeled_augment,
        ..common::plain_train()
    };
    let batch = Batch {
        labeled: Vec::new(),
        unlabeled: items.iter().collect(),
    };
    let labels = labels_for_batch(&params, &batch, &tc, None, 5).unwrap();
    let g = gradient_with_labels(&params, &batch, &labels, &tc, 5, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let direction: Vec<Tensor> = params
        .iter()
        .map(|(_, t)| Tensor::new(t.shape().to_vec(), (0..t.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
        .collect();
    let shifted = |eps: f64| {
        let mut p = params.clone();
        let names: Vec<String> = params.names().map(String::from).collect();
        for (name, d) in names.iter().zip(&direction) {
            for (v, dv) in p.get_mut(name).unwrap().data_mut().iter_mut().zip(d.data()) {
                *v += eps * dv;
            }
        }
        p
    };
    let analytic: f64 = g
        .grads
        .iter()
        .zip(&direction)
        .map(|(a, d)| a.data().iter().zip(d.data()).map(|(x, y)| x * y).sum::<f64>())
        .sum();
    let eps = 1e-5;
    let loss_fixed = |p: &ModelParams| gradient_with_labels(p, &batch, &labels, &tc, 5, 0).unwrap().metrics.total_loss;
    let loss_moving = |p: &ModelParams| {
        let l = labels_for_batch(p, &batch, &tc, None, 5).unwrap();
        gradient_with_labels(p, &batch, &l, &tc, 5, 0).unwrap().metrics.total_loss
    };
    let fd_fixed = (loss_fixed(&shifted(eps)) - loss_fixed(&shifted(-eps))) / (2.0 * eps);
    let fd_moving = (loss_moving(&shifted(eps)) - loss_moving(&shifted(-eps))) / (2.0 * eps);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-8);
    let matches_fixed = rel(analytic, fd_fixed) < 1e-5;
    let differs_moving = rel(analytic, fd_moving) > 1e-3;

    // Recomputing the labels from a different model leaves the gradient
    // structure intact: only the targets change, never the graph.
    let other = ModelParams::random(&cfg, 22, 0.6).unwrap();
    let l_other = labels_for_batch(&other, &batch, &tc, None, 5).unwrap();
    let g_other = gradient_with_labels(&params, &batch, &l_other, &tc, 5, 0).unwrap();
    let labels_matter = max_abs_diff(&g.grads, &g_other.grads) > 0.0;

    Verdict::new(
        hash_ok && matches_fixed && differs_moving && labels_matter,
        format!(
            "{hash_detail}; FixMatch directional derivative {analytic:.6e} vs fixed-target FD {fd_fixed:.6e} \
             (moving-target FD {fd_moving:.6e})"
        ),
    )
}

fn main() {
    let selected: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: u32| selected.is_empty() || selected.contains(&n);
    let fast: [(u32, &str, fn() -> Verdict); 7] = [
        (1, "gradient correctness", c1_gradients),
        (2, "metric exactness", c2_metrics),
        (3, "WER oracle equivalence", c3_wer_oracle),
        (4, "beam-search oracle equivalence", c4_beam_oracle),
        (5, "selection-fraction monotonicity", c5_selection),
        (6, "SpecAugment bounds", c6_spec_augment),
        (10, "hard-label equivalence", c10_hard_equivalence),
    ];
    let mut results: Vec<(u32, &str, Verdict, Duration)> = Vec::new();
    let mut report = |n: u32, name: &'static str, v: Verdict, t: Duration| {
        let line = format!(
            "criterion {n:>2} {} {name}: {} [{:.1?}]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t
        );
        // Written straight to stderr so the line shows even when the test
        // harness captures output.
        let _ = writeln!(std::io::stderr(), "{line}");
        results.push((n, name, v, t));
    };
    for (n, name, f) in fast {
        if want(n) {
            let t = Instant::now();
            let v = f();
            report(n, name, v, t.elapsed());
        }
    }
    if want(11) {
        let t = Instant::now();
        let v = c11_teacher_and_labels();
        report(11, "teacher immutability", v, t.elapsed());
    }
    if want(7) || want(8) || want(9) {
        for (n, name, v, t) in desk::run(&want) {
            report(n, name, v, t);
        }
    }
    results.sort_by_key(|r| r.0);
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    let _ = writeln!(
        std::io::stderr(),
        "acceptance: {} of {} selected criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        let _ = writeln!(std::io::stderr(), "acceptance: failed {failed:?}");
        std::process::exit(1);
    }
}
