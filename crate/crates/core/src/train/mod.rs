//! Optimization loops: the three-stage word schedule, sentence-level CTC
//! training, front-end transfer, and run-directory bookkeeping.

mod recognize;
mod sentence;
mod word;

pub use recognize::{SentenceRecognizer, WordRecognizer};
pub use sentence::{train_sentence, SentenceTrainConfig, TranscribedSet};
pub use word::{evaluate_word, fine_tune_word, train_word, transfer_frontend, LabeledSet, TransferPlan};

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentError;
use crate::models::{Backend, Checkpoint, ModelError, FRONTEND_PREFIX};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("loss became non-finite in stage {stage} epoch {epoch}")]
    DivergenceDetected { stage: String, epoch: usize, last_good: Box<Checkpoint> },
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("invalid training plan: {0}")]
    InvalidPlan(String),
    #[error("no training samples")]
    EmptyData,
    #[error("sample {index}: {reason}")]
    BadSample { index: usize, reason: String },
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::ConfigMismatch(m) => TrainError::ConfigMismatch(m),
            other => TrainError::Model(other),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StageName {
    I,
    II,
    III,
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageName::I => "I",
            StageName::II => "II",
            StageName::III => "III",
        })
    }
}

/// Which parameters an optimizer step may touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Frontend plus the temporal-convolution head.
    FrontendTemporalConv,
    /// Everything except the frontend.
    BackendOnly,
    Full,
}

impl Scope {
    pub fn contains(&self, name: &str) -> bool {
        match self {
            Scope::FrontendTemporalConv => name.starts_with(FRONTEND_PREFIX) || name.starts_with("backend.tcn."),
            Scope::BackendOnly => !name.starts_with(FRONTEND_PREFIX),
            Scope::Full => true,
        }
    }
}

/// Log-scale decay: from `start_epoch` on, the rate shrinks by `factor`
/// every epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrDecay {
    pub start_epoch: usize,
    pub factor: f64,
}

impl LrDecay {
    /// Tenfold every five epochs.
    pub const FACTOR: f64 = 0.630_957_344_480_193_2;

    /// Decay starts at epoch 10 with Cutout, epoch 5 without.
    pub fn for_cutout(cutout: bool) -> Self {
        Self { start_epoch: if cutout { 10 } else { 5 }, factor: Self::FACTOR }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: StageName,
    pub scope: Scope,
    pub backend: Backend,
    pub init_lr: f64,
    pub lr_decay: Option<LrDecay>,
    pub weight_decay: f64,
    pub max_epochs: usize,
}

impl Stage {
    /// Learning rate for 1-based `epoch`.
    pub fn lr(&self, epoch: usize) -> f64 {
        match self.lr_decay {
            Some(d) if epoch >= d.start_epoch => self.init_lr * d.factor.powi((epoch - d.start_epoch + 1) as i32),
            _ => self.init_lr,
        }
    }

    pub fn stage_i(max_epochs: usize, cutout: bool) -> Self {
        Self {
            name: StageName::I,
            scope: Scope::FrontendTemporalConv,
            backend: Backend::TemporalConv,
            init_lr: 3e-4,
            lr_decay: Some(LrDecay::for_cutout(cutout)),
            weight_decay: 1e-4,
            max_epochs,
        }
    }

    pub fn stage_ii(max_epochs: usize, cutout: bool) -> Self {
        Self { name: StageName::II, ..Self::stage_i(max_epochs, cutout) }
    }

    pub fn stage_iii(max_epochs: usize, cutout: bool) -> Self {
        Self {
            name: StageName::III,
            scope: Scope::Full,
            backend: Backend::BiGru,
            init_lr: 1e-3,
            lr_decay: Some(LrDecay::for_cutout(cutout)),
            weight_decay: 1e-4,
            max_epochs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stages: Vec<Stage>,
    pub batch_size: usize,
    /// Stop a stage after this many epochs without a better validation
    /// score; `None` runs every epoch.
    pub patience: Option<usize>,
}

impl StagePlan {
    pub fn three_stage(epochs: [usize; 3], cutout: bool) -> Self {
        Self {
            stages: vec![Stage::stage_i(epochs[0], cutout), Stage::stage_ii(epochs[1], cutout), Stage::stage_iii(epochs[2], cutout)],
            batch_size: 32,
            patience: Some(3),
        }
    }

    pub fn stage_iii_only(epochs: usize, cutout: bool) -> Self {
        Self { stages: vec![Stage::stage_iii(epochs, cutout)], batch_size: 32, patience: Some(3) }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidPlan(m));
        if self.stages.is_empty() {
            return bad("plan has no stages".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        for w in self.stages.windows(2) {
            if w[0].name as u8 >= w[1].name as u8 {
                return bad(format!("stage {} cannot follow stage {}", w[1].name, w[0].name));
            }
        }
        for s in &self.stages {
            if !(s.init_lr > 0.0 && s.init_lr.is_finite()) {
                return bad(format!("stage {}: init_lr must be positive", s.name));
            }
            if s.weight_decay < 0.0 {
                return bad(format!("stage {}: weight_decay must be non-negative", s.name));
            }
            if let Some(d) = s.lr_decay {
                if d.start_epoch == 0 || !(d.factor > 0.0 && d.factor <= 1.0) {
                    return bad(format!("stage {}: decay needs start_epoch >= 1 and factor in (0, 1]", s.name));
                }
            }
            if s.scope == Scope::FrontendTemporalConv && s.backend != Backend::TemporalConv {
                return bad(format!("stage {}: frontend+temporal-conv scope needs the temporal-conv backend", s.name));
            }
        }
        Ok(())
    }
}

/// One line of `events.log`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochEvent {
    pub stage: String,
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Accuracy (word) or WER (sentence) on the training set.
    pub train_metric: f64,
    pub val_metric: Option<f64>,
}

/// Append-only epoch log, optionally mirrored to a JSON-lines file.
#[derive(Debug, Default)]
pub struct EventLog {
    path: Option<PathBuf>,
    pub events: Vec<EpochEvent>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Appends to `path`, creating it if needed.
    pub fn to_file(path: &Path) -> Result<Self, std::io::Error> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { path: Some(path.to_path_buf()), events: Vec::new() })
    }

    pub fn push(&mut self, event: EpochEvent) -> Result<(), std::io::Error> {
        if let Some(p) = &self.path {
            let mut f = std::fs::OpenOptions::new().append(true).open(p)?;
            writeln!(f, "{}", serde_json::to_string(&event).expect("event serializes"))?;
        }
        log::info!(
            "stage {} epoch {} lr {:.3e} loss {:.4} train {:.4} val {:?}",
            event.stage,
            event.epoch,
            event.lr,
            event.train_loss,
            event.train_metric,
            event.val_metric
        );
        self.events.push(event);
        Ok(())
    }
}

/// Outcome of one stage.
#[derive(Clone, Debug)]
pub struct StageResult {
    pub name: String,
    pub best: Checkpoint,
    /// 0 when no epoch ran (the initial weights).
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Clone, Debug, Default)]
pub struct TrainHistory {
    pub stages: Vec<StageResult>,
}

/// Where a run keeps its artifacts.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
    /// Stamped into every checkpoint saved through [`RunDir::save_best`].
    pub config_hash: Option<String>,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), config_hash: None }
    }

    pub fn with_config_hash(self, hash: impl Into<String>) -> Self {
        Self { config_hash: Some(hash.into()), ..self }
    }

    /// Writes `ckpt` as the best checkpoint of its stage.
    pub fn save_best(&self, ckpt: &Checkpoint) -> Result<PathBuf, ModelError> {
        let stem = self.best_checkpoint(&ckpt.meta.stage);
        let mut c = ckpt.clone();
        c.meta.run_config_hash = self.config_hash.clone();
        c.save(&stem)?;
        Ok(stem)
    }

    pub fn events(&self) -> PathBuf {
        self.root.join("events.log")
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    /// Checkpoint stem (without extension) of a stage's best weights.
    pub fn best_checkpoint(&self, stage: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("stage{stage}-best"))
    }
}

/// Per-epoch shuffling seed, distinct from the per-sample augmentation seeds.
pub(crate) fn shuffle_seed(seed: u64, epoch_key: u64) -> u64 {
    crate::augment::sample_seed(seed ^ 0x5348_5546_464c_4521, u64::MAX, epoch_key)
}

/// `true` when `(metric, loss)` beats `best`; higher metric wins, then lower loss.
pub(crate) fn improves(candidate: (f64, f64), best: Option<(f64, f64)>) -> bool {
    match best {
        None => true,
        Some(b) => candidate.0 > b.0 || (candidate.0 == b.0 && candidate.1 < b.1),
    }
}
