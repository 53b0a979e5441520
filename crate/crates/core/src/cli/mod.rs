//! Command-line front end. Every subcommand writes into `--out`, which it
//! owns for the duration of the run.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 on any other failure with
//! `{"error": {"kind", "message"}}` on stderr.

mod config;
mod shards;

pub use config::{DecodeConfig, RunConfig};
pub use shards::{cache_root, ensure_shards, load_shards, prep_hash, prepare_shards, ClipFailure, PrepareSummary, ShardSidecar};

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::{generate_synthetic, CueRegion, SentenceGrammar, Split, SyntheticSpec, VideoClip};
use crate::diagnose::{
    feature_maps, guided_backprop_saliency, occlusion_heatmap, DiagnoseError, DiagnosticsDir, OcclusionConfig, SaliencyTarget,
};
use crate::eval::{evaluate, CharNGramLM, EvalError, EvalReport, Task};
use crate::geometry::{FaceTemplate, RoIKind, RoISpec};
use crate::models::{Checkpoint, LayerId, LoadMode, ModelError, SentenceModel, WordModel};
use crate::train::{
    fine_tune_word, train_sentence, train_word, transfer_frontend, EventLog, LabeledSet, RunDir, SentenceRecognizer,
    TrainError, TranscribedSet, TransferPlan, WordRecognizer,
};
use shards::{read_manifest, write_json};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Data(String),
    #[error("{failed} of {total} clips failed")]
    PartialFailure { failed: usize, total: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Diagnose(#[from] DiagnoseError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Data(_) => "data",
            CliError::PartialFailure { .. } => "partial_failure",
            CliError::Model(_) => "model",
            CliError::Train(TrainError::DivergenceDetected { .. }) => "divergence",
            CliError::Train(_) => "train",
            CliError::Eval(_) => "eval",
            CliError::Diagnose(_) => "diagnose",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

#[derive(Debug, Parser)]
#[command(name = "facevsr", version, about = "Face-region visual speech recognition")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; required by every subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic talking-face corpus.
    Synth(SynthArgs),
    /// Smooth, align and crop a corpus into shards.
    Prepare(PrepareArgs),
    /// Train a word or sentence model.
    Train(TrainArgs),
    /// Score a checkpoint on one split.
    Eval(EvalArgs),
    /// Load a checkpoint's frontend into a fresh model and fine-tune.
    Transfer(TransferArgs),
    /// Feature maps, saliency or occlusion heatmaps for a checkpoint.
    Diagnose(DiagnoseArgs),
}

/// Options shared by every subcommand, after validation.
#[derive(Clone, Debug)]
pub struct Global {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CueArg {
    Mouth,
    Cheeks,
    UpperFace,
}

impl From<CueArg> for CueRegion {
    fn from(c: CueArg) -> Self {
        match c {
            CueArg::Mouth => CueRegion::Mouth,
            CueArg::Cheeks => CueRegion::Cheeks,
            CueArg::UpperFace => CueRegion::UpperFace,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GrammarArg {
    Small,
    Grid,
}

#[derive(Clone, Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    pub classes: usize,
    #[arg(long, default_value_t = 40)]
    pub clips_per_class: usize,
    /// Cue region; repeat for several. The first carries the cue unless
    /// `--redundant` is set.
    #[arg(long = "cue", value_enum)]
    pub cues: Vec<CueArg>,
    #[arg(long)]
    pub redundant: bool,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Square canvas side in pixels.
    #[arg(long)]
    pub canvas: Option<usize>,
    /// Sentence corpus with this grammar instead of word classes.
    #[arg(long, value_enum)]
    pub sentences: Option<GrammarArg>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RoiArg {
    Mouth,
    Face,
    UpperFace,
    Cheeks,
}

#[derive(Clone, Debug, Args)]
pub struct PrepareArgs {
    /// Corpus manifest; defaults to the one in `--config`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Crop preset; defaults to the RoI in `--config`.
    #[arg(long, value_enum)]
    pub roi: Option<RoiArg>,
    /// Aligned face side the presets are scaled to.
    #[arg(long, default_value_t = 122)]
    pub face: usize,
    /// Mouth square side in source pixels (mouth preset).
    #[arg(long, default_value_t = 20.0)]
    pub mouth_side: f64,
    /// Output side for the mouth and face presets; defaults to `--face`.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub no_smoothing: bool,
}

#[derive(Clone, Debug, Args)]
pub struct TrainArgs {
    /// Corpus manifest for a default word run when no `--config` is given.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint stem (path without extension).
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
}

#[derive(Clone, Debug, Args)]
pub struct TransferArgs {
    /// Source checkpoint stem.
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub freeze: bool,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnoseKind {
    Saliency,
    Featmaps,
    Occlusion,
}

#[derive(Clone, Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum)]
    pub kind: DiagnoseKind,
    /// `stem` or `layer1`..`layer4`.
    #[arg(long, default_value = "stem")]
    pub layer: String,
    #[arg(long, default_value_t = 7)]
    pub patch: usize,
    #[arg(long, default_value_t = 7)]
    pub stride: usize,
    /// Clips to inspect (saliency, feature maps) or to score (occlusion; 0
    /// means the whole split).
    #[arg(long, default_value_t = 4)]
    pub clips: usize,
    #[arg(long, default_value = "test")]
    pub split: Split,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let Some(out) = cli.out.clone() else {
        let _ = Cli::command().error(clap::error::ErrorKind::MissingRequiredArgument, "--out <OUT> is required").print();
        return 2;
    };
    let g = Global { config: cli.config, seed: cli.seed, out };
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(&g, a).map(drop),
        Command::Prepare(a) => cmd_prepare(&g, a).map(drop),
        Command::Train(a) => cmd_train(&g, a).map(drop),
        Command::Eval(a) => cmd_eval(&g, a).map(drop),
        Command::Transfer(a) => cmd_transfer(&g, a).map(drop),
        Command::Diagnose(a) => cmd_diagnose(&g, a).map(drop),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// The generator spec the synth flags describe.
pub fn synth_spec(g: &Global, a: &SynthArgs) -> Result<SyntheticSpec, CliError> {
    let mut spec = match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => {
            let cues = if a.cues.is_empty() { vec![CueRegion::Mouth] } else { a.cues.iter().map(|&c| c.into()).collect() };
            let mut s = SyntheticSpec::words(a.classes, a.clips_per_class, cues, 0);
            s.redundancy = a.redundant;
            if let Some(f) = a.frames {
                s.frames = f;
            }
            if let Some(c) = a.canvas {
                s.canvas = (c, c);
            }
            s.sentences = a.sentences.map(|gr| match gr {
                GrammarArg::Small => SentenceGrammar::small(),
                GrammarArg::Grid => SentenceGrammar::grid(),
            });
            s
        }
    };
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(spec)
}

/// Writes a synthetic corpus to `--out`; returns the spec used.
pub fn cmd_synth(g: &Global, a: &SynthArgs) -> Result<SyntheticSpec, CliError> {
    let spec = synth_spec(g, a)?;
    let corpus = generate_synthetic(&spec).map_err(|e| CliError::Data(e.to_string()))?;
    corpus.write(&g.out).map_err(|e| CliError::Data(e.to_string()))?;
    log::info!("wrote {} clips to {}", corpus.clips.len(), g.out.display());
    Ok(spec)
}

/// RoI spec of a crop preset.
pub fn roi_preset(roi: RoiArg, face: usize, mouth_side: f64, size: Option<usize>) -> RoISpec {
    let side = size.unwrap_or(face);
    let template = FaceTemplate::new((face, face));
    match roi {
        RoiArg::Mouth => RoISpec::new(RoIKind::MouthCentered { side: mouth_side }, (side, side), template),
        RoiArg::Face => RoISpec::new(RoIKind::FaceAligned, (side, side), template),
        RoiArg::UpperFace => RoISpec::new(RoIKind::UpperFace, (side / 2, side), template),
        RoiArg::Cheeks if face == 122 => RoISpec::word_cheeks(),
        RoiArg::Cheeks => RoISpec::word_cheeks().scaled_to(face),
    }
}

/// Prepares shards into `--out`. Clips that fail are skipped and reported;
/// the command then fails with [`CliError::PartialFailure`].
pub fn cmd_prepare(g: &Global, a: &PrepareArgs) -> Result<PrepareSummary, CliError> {
    let cfg = g.config.as_deref().map(RunConfig::load).transpose()?;
    let manifest = a
        .manifest
        .clone()
        .or_else(|| cfg.as_ref().map(|c| c.manifest.clone()))
        .ok_or_else(|| CliError::Usage("prepare needs --manifest or a --config".into()))?;
    let roi = match (a.roi, &cfg) {
        (Some(r), _) => roi_preset(r, a.face, a.mouth_side, a.size),
        (None, Some(c)) => c.roi.clone(),
        (None, None) => return Err(CliError::Usage("prepare needs --roi or a --config".into())),
    };
    let smoothing = if a.no_smoothing {
        None
    } else {
        cfg.as_ref().map_or(Some(Default::default()), |c| c.smoothing)
    };
    let summary = prepare_shards(&manifest, &roi, smoothing, &g.out)?;
    if !summary.failures.is_empty() {
        return Err(CliError::PartialFailure { failed: summary.failures.len(), total: summary.prepared + summary.failures.len() });
    }
    Ok(summary)
}

/// Resolves the run config: `--config`, else `fallback`, with `--seed`
/// applied to the run and to model initialization.
fn run_config(g: &Global, fallback: Option<&Path>) -> Result<RunConfig, CliError> {
    let path = g.config.as_deref().or(fallback).ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    apply_seed(&mut cfg, g.seed);
    Ok(cfg)
}

fn apply_seed(cfg: &mut RunConfig, seed: Option<u64>) {
    if let Some(s) = seed {
        cfg.seed = s;
        if let Some(m) = &mut cfg.word_model {
            m.seed = s;
        }
        if let Some(m) = &mut cfg.sentence_model {
            m.seed = s;
        }
    }
}

/// Prepared clips of one run, by split, plus the word vocabulary.
pub struct RunData {
    pub clips: Vec<VideoClip>,
    pub classes: Vec<String>,
}

impl RunData {
    pub fn load(cfg: &RunConfig) -> Result<Self, CliError> {
        let dir = ensure_shards(&cfg.manifest, &cfg.roi, cfg.smoothing, cfg.shards.as_deref())?;
        let classes = read_manifest(&dir.join("manifest.jsonl"))?.vocabulary();
        Ok(Self { clips: load_shards(&dir)?, classes })
    }

    pub fn split(&self, split: Split) -> Vec<VideoClip> {
        self.clips.iter().filter(|c| c.meta.as_ref().is_some_and(|m| m.split == split)).cloned().collect()
    }

    fn labeled(&self, split: Split) -> Result<Option<LabeledSet>, CliError> {
        let clips = self.split(split);
        if clips.is_empty() {
            return Ok(None);
        }
        Ok(Some(LabeledSet::from_labels(clips, &self.classes)?))
    }

    fn transcribed(&self, split: Split) -> Result<Option<TranscribedSet>, CliError> {
        let clips = self.split(split);
        if clips.is_empty() {
            return Ok(None);
        }
        Ok(Some(TranscribedSet::from_meta(clips)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub name: String,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub metrics: BTreeMap<String, f64>,
}

/// `summary.json` of a train or transfer run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config_hash: String,
    pub task: Task,
    pub classes: Vec<String>,
    pub stages: Vec<StageSummary>,
    /// Final checkpoint stem, relative to the run directory.
    pub final_checkpoint: String,
    pub frontend_param_hash: String,
}

fn word_model(cfg: &RunConfig) -> Result<WordModel, CliError> {
    let mc = cfg.word_model.clone().ok_or_else(|| CliError::Config("word task needs word_model".into()))?;
    Ok(WordModel::new(mc)?)
}

fn sentence_model(cfg: &RunConfig) -> Result<SentenceModel, CliError> {
    let mc = cfg.sentence_model.clone().ok_or_else(|| CliError::Config("sentence task needs sentence_model".into()))?;
    Ok(SentenceModel::new(mc)?)
}

fn begin_run(g: &Global, cfg: &RunConfig) -> Result<RunDir, CliError> {
    cfg.validate()?;
    create_dir(&g.out)?;
    let dir = RunDir::new(&g.out).with_config_hash(cfg.hash());
    write_text(&dir.config(), &cfg.to_json())?;
    Ok(dir)
}

fn save_final<N: crate::models::Network>(dir: &RunDir, model: &mut N, stage: &str, epoch: usize) -> Result<Checkpoint, CliError> {
    let mut ckpt = Checkpoint::capture(model, stage, epoch, BTreeMap::new());
    ckpt.meta.run_config_hash = dir.config_hash.clone();
    ckpt.save(&dir.root.join("checkpoints").join("final"))?;
    Ok(ckpt)
}

/// Trains the configured model in `--out`: `config.json`, `events.log`,
/// per-stage best checkpoints, `checkpoints/final` and `summary.json`.
pub fn cmd_train(g: &Global, a: &TrainArgs) -> Result<TrainSummary, CliError> {
    let cfg = match (&g.config, &a.manifest) {
        (Some(_), _) => run_config(g, None)?,
        (None, Some(m)) => {
            let classes = read_manifest(m)?.vocabulary().len();
            let mut c = RunConfig::word_default(std::path::absolute(m).map_err(|e| CliError::io(m, e))?, classes);
            apply_seed(&mut c, g.seed);
            c
        }
        (None, None) => return Err(CliError::Usage("train needs --config or --manifest".into())),
    };
    if cfg.task == Task::Word && cfg.plan.is_none() {
        return Err(CliError::Config("word task needs a stage plan".into()));
    }
    let dir = begin_run(g, &cfg)?;
    let data = RunData::load(&cfg)?;
    let mut log = EventLog::to_file(&dir.events()).map_err(|e| CliError::io(&dir.events(), e))?;
    let (history, ckpt) = match cfg.task {
        Task::Word => {
            let mut model = word_model(&cfg)?;
            let train = data.labeled(Split::Train)?.ok_or(TrainError::EmptyData)?;
            let val = data.labeled(Split::Val)?;
            let plan = cfg.plan.clone().expect("checked above");
            let h = train_word(&mut model, &train, val.as_ref(), &plan, &cfg.augment, cfg.seed, &mut log, Some(&dir))?;
            let last = h.stages.last().map_or(0, |s| s.best_epoch);
            (h, save_final(&dir, &mut model, "final", last)?)
        }
        Task::Sentence => {
            let mut model = sentence_model(&cfg)?;
            let train = data.transcribed(Split::Train)?.ok_or(TrainError::EmptyData)?;
            let val = data.transcribed(Split::Val)?;
            let tc = cfg.sentence_train.clone().unwrap_or_default();
            let h = train_sentence(&mut model, &train, val.as_ref(), &tc, cfg.seed, &mut log, Some(&dir))?;
            let last = h.stages.last().map_or(0, |s| s.best_epoch);
            (h, save_final(&dir, &mut model, "final", last)?)
        }
    };
    let summary = TrainSummary {
        config_hash: cfg.hash(),
        task: cfg.task,
        classes: if cfg.task == Task::Word { data.classes } else { Vec::new() },
        stages: history
            .stages
            .iter()
            .map(|s| StageSummary {
                name: s.name.clone(),
                best_epoch: s.best_epoch,
                epochs_run: s.epochs_run,
                metrics: s.best.meta.metrics.clone(),
            })
            .collect(),
        final_checkpoint: "checkpoints/final".into(),
        frontend_param_hash: ckpt.meta.frontend_param_hash.clone(),
    };
    write_json(&dir.root.join("summary.json"), &summary)?;
    Ok(summary)
}

/// The run directory of a checkpoint stem `<run>/checkpoints/<name>`.
fn run_of_checkpoint(stem: &Path) -> Option<PathBuf> {
    Some(stem.parent()?.parent()?.join("config.json"))
}

/// `report.json` of an eval run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub config_hash: String,
    pub checkpoint_config_hash: String,
    pub split: Split,
    #[serde(flatten)]
    pub report: EvalReport,
}

/// Scores `--checkpoint` on one split. The config defaults to the one saved
/// in the checkpoint's run directory.
pub fn cmd_eval(g: &Global, a: &EvalArgs) -> Result<EvalOutput, CliError> {
    let cfg = run_config(g, run_of_checkpoint(&a.checkpoint).as_deref())?;
    cfg.validate()?;
    create_dir(&g.out)?;
    write_text(&g.out.join("config.json"), &cfg.to_json())?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let data = RunData::load(&cfg)?;
    let clips = data.split(a.split);
    let report = match cfg.task {
        Task::Word => {
            let mut model = word_model(&cfg)?;
            ckpt.restore_into(&mut model, LoadMode::Strict)?;
            let mut rec = WordRecognizer { model: &mut model, policy: &cfg.augment, classes: &data.classes };
            evaluate(&mut rec, &clips, Task::Word, &data.classes, &cfg.eval)?
        }
        Task::Sentence => {
            let mut model = sentence_model(&cfg)?;
            ckpt.restore_into(&mut model, LoadMode::Strict)?;
            let lm = match cfg.decode.lm_order {
                Some(order) => {
                    let train = data.transcribed(Split::Train)?.unwrap_or_default();
                    let corpus: Vec<&str> = train.transcripts.iter().map(String::as_str).collect();
                    Some(CharNGramLM::fit(&corpus, &model.config().alphabet.clone(), order, cfg.decode.lm_add_k))
                }
                None => None,
            };
            let mut rec = SentenceRecognizer { model: &mut model, beam: cfg.decode.beam.clone(), lm: lm.as_ref() };
            evaluate(&mut rec, &clips, Task::Sentence, &[], &cfg.eval)?
        }
    };
    let out = EvalOutput { config_hash: cfg.hash(), checkpoint_config_hash: ckpt.meta.config_hash.clone(), split: a.split, report };
    write_json(&g.out.join("report.json"), &out)?;
    write_text(&g.out.join("confusions.csv"), &out.report.confusion_csv())?;
    Ok(out)
}

/// Loads the source frontend into a fresh word model, fine-tunes it on the
/// configured corpus and writes `checkpoints/final` plus `summary.json`.
pub fn cmd_transfer(g: &Global, a: &TransferArgs) -> Result<TrainSummary, CliError> {
    let cfg = run_config(g, None)?;
    if cfg.task != Task::Word {
        return Err(CliError::Config("transfer applies to word models".into()));
    }
    let dir = begin_run(g, &cfg)?;
    let data = RunData::load(&cfg)?;
    let mut model = word_model(&cfg)?;
    let plan = TransferPlan { source: a.source.clone(), freeze: a.freeze, fine_tune_epochs: a.epochs };
    let source = transfer_frontend(&mut model, &plan)?;
    let train = data.labeled(Split::Train)?.ok_or(TrainError::EmptyData)?;
    let val = data.labeled(Split::Val)?;
    let batch = cfg.plan.as_ref().map_or(4, |p| p.batch_size);
    let mut log = EventLog::to_file(&dir.events()).map_err(|e| CliError::io(&dir.events(), e))?;
    let r = fine_tune_word(&mut model, &train, val.as_ref(), &plan, batch, &cfg.augment, cfg.seed, &mut log)?;
    let ckpt = save_final(&dir, &mut model, "transfer", r.best_epoch)?;
    if a.freeze && ckpt.meta.frontend_param_hash != source.meta.frontend_param_hash {
        return Err(CliError::Train(TrainError::ConfigMismatch("frozen frontend changed during fine-tuning".into())));
    }
    let summary = TrainSummary {
        config_hash: cfg.hash(),
        task: Task::Word,
        classes: data.classes,
        stages: vec![StageSummary {
            name: r.name,
            best_epoch: r.best_epoch,
            epochs_run: r.epochs_run,
            metrics: r.best.meta.metrics.clone(),
        }],
        final_checkpoint: "checkpoints/final".into(),
        frontend_param_hash: ckpt.meta.frontend_param_hash.clone(),
    };
    write_json(&dir.root.join("summary.json"), &summary)?;
    Ok(summary)
}

/// `diagnostics/index.json`: what was written and the headline numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseIndex {
    pub kind: DiagnoseKind,
    pub checkpoint_config_hash: String,
    pub split: Split,
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occlusion_grid: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occlusion_argmax: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_accuracy: Option<f64>,
}

/// Writes the requested diagnostics under `--out/diagnostics`.
pub fn cmd_diagnose(g: &Global, a: &DiagnoseArgs) -> Result<DiagnoseIndex, CliError> {
    let cfg = run_config(g, run_of_checkpoint(&a.checkpoint).as_deref())?;
    cfg.validate()?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let data = RunData::load(&cfg)?;
    let mut clips = data.split(a.split);
    if clips.is_empty() {
        return Err(DiagnoseError::NoClips.into());
    }
    // models see the evaluation view of each clip
    clips = clips.iter().map(|c| cfg.augment.eval(c)).collect::<Result<_, _>>().map_err(TrainError::from)?;
    let out = DiagnosticsDir::for_run(&g.out);
    let rel = |p: PathBuf| p.strip_prefix(&g.out).unwrap_or(&p).to_string_lossy().into_owned();
    let mut index = DiagnoseIndex {
        kind: a.kind,
        checkpoint_config_hash: ckpt.meta.config_hash.clone(),
        split: a.split,
        files: Vec::new(),
        occlusion_grid: None,
        occlusion_argmax: None,
        baseline_accuracy: None,
    };
    let take = a.clips.max(1).min(clips.len());
    match (cfg.task, a.kind) {
        (Task::Sentence, DiagnoseKind::Saliency) => {
            let mut model = sentence_model(&cfg)?;
            ckpt.restore_into(&mut model, LoadMode::Strict)?;
            for clip in &clips[..take] {
                let sal = guided_backprop_saliency(&mut model, clip, &SaliencyTarget::GreedyPath)?;
                index.files.push(rel(out.write_saliency(&sal, clip)?));
            }
        }
        (Task::Sentence, _) => return Err(CliError::Config("sentence models support saliency only".into())),
        (Task::Word, kind) => {
            let mut model = word_model(&cfg)?;
            ckpt.restore_into(&mut model, LoadMode::Strict)?;
            let targets = LabeledSet::from_labels(clips.clone(), &data.classes)?.targets;
            match kind {
                DiagnoseKind::Saliency => {
                    for (clip, &k) in clips.iter().zip(&targets).take(take) {
                        let sal = guided_backprop_saliency(&mut model, clip, &SaliencyTarget::Class(k))?;
                        index.files.push(rel(out.write_saliency(&sal, clip)?));
                    }
                }
                DiagnoseKind::Featmaps => {
                    let layer: LayerId = a.layer.parse().map_err(DiagnoseError::from)?;
                    for clip in &clips[..take] {
                        let fm = feature_maps(&mut model, clip, layer)?;
                        index.files.push(rel(out.write_feature_maps(&fm)?));
                    }
                }
                DiagnoseKind::Occlusion => {
                    let oc = OcclusionConfig {
                        patch: a.patch,
                        stride: a.stride,
                        fill: 0.0,
                        max_clips: (a.clips > 0).then_some(a.clips),
                    };
                    let hm = occlusion_heatmap(&mut model, &clips, &targets, &oc)?;
                    index.occlusion_grid = Some(hm.grid.dim());
                    index.occlusion_argmax = Some(hm.argmax());
                    index.baseline_accuracy = Some(hm.baseline);
                    index.files.push(rel(out.write_occlusion(a.split.as_str(), &hm)?));
                }
            }
        }
    }
    write_json(&out.root.join("index.json"), &index)?;
    Ok(index)
}
