use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seqssl::config::{parse_override, KvDocument};
use seqssl::experiment::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "seqssl", version, about = "Semi-supervised seq2seq experiments on a synthetic corpus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Key-value config file; may name a recipe with `experiment.recipe`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed (sets train.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// KEY=VALUE applied after the config file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the corpus and write the five dataset files.
    MakeData {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model and keep the checkpoint with the best validation WER.
    Train {
        #[command(flatten)]
        common: Common,
        /// supervised, pt-fixed, fixmatch, noisy-student or iterative-self-training.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Transcribe an unlabeled tranche into a PT store.
    GeneratePt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// unlabeled-1 or unlabeled-2.
        #[arg(long)]
        tranche: Option<String>,
    },
    /// Score a checkpoint; with baseline and oracle results also WERR and WRR.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<String>,
        /// eval-*.json of the baseline run.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// eval-*.json of the oracle run.
        #[arg(long)]
        oracle: Option<PathBuf>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::MakeData { common }
            | Command::Train { common, .. }
            | Command::GeneratePt { common, .. }
            | Command::Evaluate { common, .. } => common,
        }
    }
}

fn resolve(cli: &Cli) -> seqssl::Result<ExperimentConfig> {
    let common = cli.command.common();
    let mut doc = match &common.config {
        Some(p) => KvDocument::parse(&std::fs::read_to_string(p)?)?,
        None => KvDocument::default(),
    };
    let path = |p: &PathBuf| p.display().to_string();
    match &cli.command {
        Command::MakeData { .. } => {}
        Command::Train { mode, .. } => {
            if let Some(m) = mode {
                doc.push("train.ssl_mode", m.as_str());
            }
        }
        Command::GeneratePt { checkpoint, tranche, .. } => {
            if let Some(c) = checkpoint {
                doc.push("experiment.checkpoint", path(c));
            }
            if let Some(t) = tranche {
                doc.push("experiment.tranche", t.as_str());
            }
        }
        Command::Evaluate {
            checkpoint,
            dataset,
            baseline,
            oracle,
            ..
        } => {
            for (key, v) in [
                ("experiment.checkpoint", checkpoint),
                ("experiment.baseline", baseline),
                ("experiment.oracle", oracle),
            ] {
                if let Some(p) = v {
                    doc.push(key, path(p));
                }
            }
            if let Some(d) = dataset {
                doc.push("experiment.dataset", d.as_str());
            }
        }
    }
    for o in &common.overrides {
        let (k, v) = parse_override(o)?;
        doc.push(k, v);
    }
    if let Some(s) = common.seed {
        doc.push("experiment.seed", s.to_string());
    }
    if let Some(o) = &common.output {
        doc.push("experiment.output", path(o));
    }
    ExperimentConfig::from_document(&doc)
}

fn run(cli: &Cli, cfg: &ExperimentConfig) -> seqssl::Result<String> {
    let out = &cfg.output;
    Ok(match cli.command {
        Command::MakeData { .. } => {
            let paths = experiment::with_quarantine(out, "make-data", cfg, |dir| experiment::make_data(cfg, dir))?;
            format!("wrote {} dataset files to {}", paths.len(), out.display())
        }
        Command::Train { .. } => {
            let r = experiment::with_quarantine(out, "train", cfg, |dir| experiment::train(cfg, dir))?;
            format!(
                "{}: best epoch {} of {}, validation WER {:.2}, model {} -> {}",
                cfg.recipe,
                r.best_epoch,
                r.validation_wer.len(),
                r.validation_wer[r.best_epoch - 1],
                r.model_id,
                out.join("model.ckpt").display()
            )
        }
        Command::GeneratePt { .. } => {
            let r = experiment::with_quarantine(out, "generate-pt", cfg, |dir| experiment::generate_pt(cfg, dir))?;
            format!(
                "{}: kept {}, loop-rejected {}, decode failures {}{}",
                r.tranche,
                r.kept,
                r.loop_rejected,
                r.decode_failed,
                r.pt_wer.map(|w| format!(", PT WER {w:.2}")).unwrap_or_default()
            )
        }
        Command::Evaluate { .. } => {
            let r = experiment::with_quarantine(out, "evaluate", cfg, |dir| experiment::evaluate(cfg, dir))?;
            let s = &r.report;
            let mut line = format!(
                "{}: WER {:.2} (S {} D {} I {} / N {})",
                r.dataset, s.wer, s.substitutions, s.deletions, s.insertions, s.reference_length
            );
            if let Some(v) = r.werr {
                line.push_str(&format!(", WERR {v:.1}"));
            }
            if let Some(v) = r.wrr {
                line.push_str(&format!(", WRR {v:.1}"));
            }
            line
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("seqssl: configuration rejected: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cli, &cfg) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!(
                "seqssl: {e}\npartial outputs moved to {}",
                cfg.output.join(experiment::QUARANTINE_DIR).display()
            );
            ExitCode::FAILURE
        }
    }
}
