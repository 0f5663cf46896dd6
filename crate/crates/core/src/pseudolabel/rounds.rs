use super::{attach, generate_pt_offline, LoopFilter, PseudoLabeled, PtGeneration};
use crate::decode::BeamConfig;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::seed::derive;
use crate::sequence::{UnlabeledUtterance, Utterance};
use crate::train::{fit, FitOutcome, MetricsRecord, SslMode, TrainConfig, TrainData};

/// Starting point of each round's student.
#[derive(Clone, Debug)]
pub enum StudentInit {
    /// Fresh random parameters; round `r` uses `derive(seed, r)`.
    Fresh { seed: u64 },
    /// A copy of given parameters, e.g. the supervised model.
    From(ModelParams),
}

#[derive(Clone, Debug)]
pub struct RoundOutcome {
    /// Model that transcribed this round's tranches and served as teacher.
    pub teacher_id: String,
    pub generation: PtGeneration,
    pub fit: FitOutcome,
}

#[derive(Clone, Debug)]
pub struct RoundsOutcome {
    pub params: ModelParams,
    pub rounds: Vec<RoundOutcome>,
}

/// Inputs shared by all rounds.
#[derive(Clone, Copy, Debug)]
pub struct RoundData<'a> {
    pub labeled: &'a [Utterance],
    pub validation: &'a [Utterance],
    /// One unlabeled tranche per round.
    pub tranches: &'a [Vec<UnlabeledUtterance>],
}

/// Repeated Noisy Student training.
///
/// Round `r` adds tranche `r`: the current teacher transcribes every tranche
/// so far, then a student trains on the labeled data plus those
/// transcriptions with that teacher supplying targets. The student becomes
/// the next teacher.
#[allow(clippy::too_many_arguments)]
pub fn noisy_student_round(
    teacher: &ModelParams,
    data: RoundData<'_>,
    rounds: usize,
    cfg: &TrainConfig,
    beam: &BeamConfig,
    filter: &LoopFilter,
    init: &StudentInit,
    log: &mut dyn FnMut(usize, &MetricsRecord) -> Result<()>,
) -> Result<RoundsOutcome> {
    if rounds == 0 {
        return Err(Error::InvalidConfig("rounds must be at least 1".into()));
    }
    if rounds > data.tranches.len() {
        return Err(Error::MissingInput(format!(
            "{rounds} rounds need {rounds} unlabeled tranches, got {}",
            data.tranches.len()
        )));
    }
    let cfg = TrainConfig {
        ssl_mode: SslMode::NoisyStudent,
        ..cfg.clone()
    };
    let mut current = teacher.clone();
    let mut outcomes = Vec::with_capacity(rounds);
    for r in 0..rounds {
        let mut generation = PtGeneration::default();
        let mut pool: Vec<PseudoLabeled> = Vec::new();
        for tranche in &data.tranches[..=r] {
            let g = generate_pt_offline(&current, tranche, beam, filter)?;
            pool.extend(attach(tranche, &g.records));
            generation.records.extend(g.records);
            generation.loop_rejected.extend(g.loop_rejected);
            generation.decode_failed.extend(g.decode_failed);
        }
        let student = match init {
            StudentInit::Fresh { seed } => ModelParams::init(current.config(), derive(*seed, r as u64))?,
            StudentInit::From(p) => p.clone(),
        };
        let round_cfg = TrainConfig {
            seed: derive(cfg.seed, r as u64),
            ..cfg.clone()
        };
        let train_data = TrainData {
            labeled: data.labeled,
            unlabeled: &pool,
            validation: data.validation,
        };
        let outcome = fit(student, &train_data, &round_cfg, Some(&current), &mut |m| log(r, m))?;
        let teacher_id = current.model_id();
        current = outcome.params.clone();
        outcomes.push(RoundOutcome {
            teacher_id,
            generation,
            fit: outcome,
        });
    }
    Ok(RoundsOutcome {
        params: current,
        rounds: outcomes,
    })
}
