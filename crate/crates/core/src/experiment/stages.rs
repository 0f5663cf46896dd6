use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, Init};
use crate::decode::score_dataset;
use crate::error::{Error, Result};
use crate::metrics::{corpus_score, werr, wrr, ScoreReport};
use crate::model::ModelParams;
use crate::pseudolabel::{attach, generate_pt_offline, read_pt_store, write_pt_store, PTRecord, PseudoLabeled};
use crate::seed::derive_named;
use crate::synthdata::{generate_corpus, load_dataset, save_dataset, split_paper_protocol, Dataset, Role};
use crate::train::{fit, MetricsRecord, SslMode, TrainData};

/// Subdirectory of the output directory that receives failed stages.
pub const QUARANTINE_DIR: &str = "quarantine";

type ConfigMap = BTreeMap<String, String>;

fn config_map(cfg: &ExperimentConfig) -> ConfigMap {
    cfg.to_document()
        .entries()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let r = File::open(path).map_err(|e| Error::MissingInput(format!("cannot open {}: {e}", path.display())))?;
    Ok(serde_json::from_reader(BufReader::new(r))?)
}

/// Run `stage` writing into a fresh staging directory under `output`.
///
/// On success the staged files move into `output`. On failure the staging
/// directory moves to `output/quarantine/<stage>-<n>` together with an
/// `error.txt`, and the error is returned.
pub fn with_quarantine<T>(
    output: &Path,
    stage: &str,
    cfg: &ExperimentConfig,
    run: impl FnOnce(&Path) -> Result<T>,
) -> Result<T> {
    fs::create_dir_all(output)?;
    let staging = output.join(format!(".staging-{stage}-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir(&staging)?;
    match run(&staging) {
        Ok(v) => {
            for entry in fs::read_dir(&staging)? {
                let entry = entry?;
                fs::rename(entry.path(), output.join(entry.file_name()))?;
            }
            fs::remove_dir(&staging)?;
            Ok(v)
        }
        Err(e) => {
            let qdir = output.join(QUARANTINE_DIR);
            fs::create_dir_all(&qdir)?;
            let dest = (0..)
                .map(|n| qdir.join(format!("{stage}-{n}")))
                .find(|p| !p.exists())
                .expect("unbounded search");
            fs::rename(&staging, &dest)?;
            fs::write(
                dest.join("error.txt"),
                format!("{e}\n\n# configuration\n{}", cfg.to_document().render()),
            )?;
            Err(e)
        }
    }
}

fn load_role(cfg: &ExperimentConfig, role: Role) -> Result<Dataset> {
    let path = cfg.dataset_path(role);
    if !path.exists() {
        return Err(Error::MissingInput(format!(
            "dataset {} not found; create it with `seqssl make-data --output {}`",
            path.display(),
            cfg.data_dir().display()
        )));
    }
    let (corpus, data) = load_dataset(&path)?;
    if corpus != cfg.corpus {
        return Err(Error::InvalidConfig(format!(
            "{} was generated with a different corpus configuration",
            path.display()
        )));
    }
    if data.role != role {
        return Err(Error::format("dataset", format!("{} holds role {}", path.display(), data.role.name())));
    }
    Ok(data)
}

fn load_checkpoint(path: &Path, what: &str, cfg: &ExperimentConfig) -> Result<ModelParams> {
    if !path.exists() {
        return Err(Error::MissingInput(format!("{what} checkpoint {} not found", path.display())));
    }
    let params = ModelParams::load(path)?;
    if params.config() != &cfg.model {
        return Err(Error::InvalidConfig(format!(
            "{what} checkpoint {} has a different model configuration",
            path.display()
        )));
    }
    Ok(params)
}

/// Initial weights for `train`: seeded uniform init or a checkpoint.
pub fn initial_params(cfg: &ExperimentConfig) -> Result<ModelParams> {
    match &cfg.init {
        Init::Scratch => ModelParams::init(&cfg.model, derive_named(cfg.seed(), "init", 0)),
        Init::Checkpoint(p) => load_checkpoint(p, "initial", cfg),
    }
}

/// Read a PT store, skipping `#` comment lines.
pub fn load_pt_store(path: &Path) -> Result<Vec<PTRecord>> {
    read_pt_store(BufReader::new(File::open(path)?))
}

/// Generate the corpus, split it and write one dataset file per role plus
/// `config.conf` into `dir`. Returns the dataset paths.
pub fn make_data(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let corpus = generate_corpus(&cfg.corpus)?;
    let splits = split_paper_protocol(&corpus, &cfg.split)?;
    let mut paths = Vec::new();
    for role in Role::ALL {
        let path = dir.join(format!("{}.s2s", role.name()));
        save_dataset(&path, &cfg.corpus, splits.get(role))?;
        paths.push(path);
    }
    fs::write(dir.join("config.conf"), cfg.to_document().render())?;
    Ok(paths)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub config: ConfigMap,
    pub model_id: String,
    pub teacher_model_id: Option<String>,
    pub labeled_utterances: usize,
    pub pseudo_labeled_utterances: usize,
    pub best_epoch: usize,
    pub validation_wer: Vec<f64>,
    pub steps: usize,
    pub early_stopped: bool,
}

fn load_pseudo_labeled(cfg: &ExperimentConfig) -> Result<Vec<PseudoLabeled>> {
    let mut out = Vec::new();
    for (i, &role) in cfg.unlabeled.iter().enumerate() {
        let store = cfg.pt_store_path(i);
        if !store.exists() {
            return Err(Error::MissingInput(format!(
                "{} training needs a pseudo-transcription store for {} at {}; create it with \
                 `seqssl generate-pt --override experiment.checkpoint=<teacher.ckpt> \
                 --override experiment.tranche={} --output {}`",
                cfg.train.ssl_mode.name(),
                role.name(),
                store.display(),
                role.name(),
                cfg.data_dir().display()
            )));
        }
        let records = load_pt_store(&store)?;
        let data = load_role(cfg, role)?;
        out.extend(attach(&data.unlabeled_view(), &records));
    }
    Ok(out)
}

/// Train per `cfg`, writing `model.ckpt` (best by validation WER),
/// `metrics.jsonl` and `train.json` into `dir`.
pub fn train(cfg: &ExperimentConfig, dir: &Path) -> Result<TrainResult> {
    cfg.validate()?;
    let mut labeled = Vec::new();
    for &role in &cfg.labeled {
        labeled.extend(load_role(cfg, role)?.utterances);
    }
    let validation = load_role(cfg, Role::Validation)?;
    let unlabeled = if cfg.train.ssl_mode.uses_unlabeled() {
        load_pseudo_labeled(cfg)?
    } else {
        Vec::new()
    };
    let teacher = match (cfg.train.ssl_mode, &cfg.teacher) {
        (SslMode::NoisyStudent, None) => {
            return Err(Error::MissingInput(
                "noisy-student training needs experiment.teacher, the checkpoint that generated the PT store"
                    .into(),
            ))
        }
        (SslMode::NoisyStudent, Some(p)) => Some(load_checkpoint(p, "teacher", cfg)?),
        _ => None,
    };
    let init = initial_params(cfg)?;

    let mut log = BufWriter::new(File::create(dir.join("metrics.jsonl"))?);
    serde_json::to_writer(&mut log, &serde_json::json!({ "config": config_map(cfg) }))?;
    writeln!(log)?;
    let data = TrainData {
        labeled: &labeled,
        unlabeled: &unlabeled,
        validation: &validation.utterances,
    };
    let outcome = fit(init, &data, &cfg.train, teacher.as_ref(), &mut |r: &MetricsRecord| {
        serde_json::to_writer(&mut log, r)?;
        writeln!(log)?;
        Ok(())
    })?;
    log.flush()?;
    outcome.params.save(&dir.join("model.ckpt"))?;
    let result = TrainResult {
        config: config_map(cfg),
        model_id: outcome.params.model_id(),
        teacher_model_id: teacher.as_ref().map(ModelParams::model_id),
        labeled_utterances: labeled.len(),
        pseudo_labeled_utterances: unlabeled.len(),
        best_epoch: outcome.best_epoch,
        validation_wer: outcome.validation_wer,
        steps: outcome.steps,
        early_stopped: outcome.early_stopped,
    };
    write_json(&dir.join("train.json"), &result)?;
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratePtResult {
    pub config: ConfigMap,
    pub tranche: String,
    pub generator_model_id: String,
    pub kept: usize,
    pub loop_rejected: usize,
    pub decode_failed: usize,
    /// WER of the kept transcriptions against the withheld references.
    pub pt_wer: Option<f64>,
}

/// Decode `cfg.tranche` with `cfg.checkpoint`, writing
/// `pt-<tranche>.tsv` and `pt-<tranche>.json` into `dir`.
pub fn generate_pt(cfg: &ExperimentConfig, dir: &Path) -> Result<GeneratePtResult> {
    cfg.validate()?;
    let ckpt = cfg.checkpoint.as_ref().ok_or_else(|| {
        Error::MissingInput("generate-pt needs experiment.checkpoint, the model that transcribes".into())
    })?;
    let params = load_checkpoint(ckpt, "generator", cfg)?;
    let data = load_role(cfg, cfg.tranche)?;
    let generation = generate_pt_offline(&params, &data.unlabeled_view(), &cfg.beam, &cfg.loop_filter)?;

    let name = cfg.tranche.name();
    let mut w = BufWriter::new(File::create(dir.join(format!("pt-{name}.tsv")))?);
    for line in cfg.to_document().render().lines() {
        writeln!(w, "# {line}")?;
    }
    write_pt_store(&mut w, &generation.records)?;
    w.flush()?;

    let refs: BTreeMap<&str, &[usize]> = data
        .utterances
        .iter()
        .map(|u| (u.id.as_str(), u.tokens.content()))
        .collect();
    let pt_wer = corpus_score(
        generation
            .records
            .iter()
            .map(|r| (refs[r.utterance_id.as_str()], r.tokens.content())),
    )
    .ok()
    .map(|s| s.wer);
    let result = GeneratePtResult {
        config: config_map(cfg),
        tranche: name.into(),
        generator_model_id: params.model_id(),
        kept: generation.records.len(),
        loop_rejected: generation.loop_rejected.len(),
        decode_failed: generation.decode_failed.len(),
        pt_wer,
    };
    write_json(&dir.join(format!("pt-{name}.json")), &result)?;
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluateResult {
    pub config: ConfigMap,
    pub dataset: String,
    pub model_id: String,
    pub report: ScoreReport,
    pub baseline_wer: Option<f64>,
    pub oracle_wer: Option<f64>,
    pub werr: Option<f64>,
    pub wrr: Option<f64>,
}

/// Score `cfg.checkpoint` on `cfg.dataset`, writing `eval-<dataset>.json`
/// into `dir`. WERR needs a baseline result; WRR needs both a baseline and
/// an oracle result.
pub fn evaluate(cfg: &ExperimentConfig, dir: &Path) -> Result<EvaluateResult> {
    cfg.validate()?;
    let ckpt = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::MissingInput("evaluate needs experiment.checkpoint".into()))?;
    let params = load_checkpoint(ckpt, "evaluated", cfg)?;
    let data = load_role(cfg, cfg.dataset)?;
    let report = score_dataset(&params, &data.utterances, &cfg.beam)?;
    let reference_wer = |p: &Option<PathBuf>| -> Result<Option<f64>> {
        p.as_ref()
            .map(|p| read_json::<EvaluateResult>(p).map(|r| r.report.wer))
            .transpose()
    };
    let baseline_wer = reference_wer(&cfg.baseline_result)?;
    let oracle_wer = reference_wer(&cfg.oracle_result)?;
    let werr_value = baseline_wer.map(|b| werr(b, report.wer)).transpose()?;
    let wrr_value = match (baseline_wer, oracle_wer) {
        (Some(b), Some(o)) => Some(wrr(b, report.wer, o)?),
        _ => None,
    };
    let result = EvaluateResult {
        config: config_map(cfg),
        dataset: cfg.dataset.name().into(),
        model_id: params.model_id(),
        report,
        baseline_wer,
        oracle_wer,
        werr: werr_value,
        wrr: wrr_value,
    };
    write_json(&dir.join(format!("eval-{}.json", cfg.dataset.name())), &result)?;
    Ok(result)
}
