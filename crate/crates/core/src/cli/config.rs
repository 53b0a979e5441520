use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::augment::AugmentPolicy;
use crate::eval::{BeamConfig, EvalConfig, Task};
use crate::geometry::{FaceTemplate, RoIKind, RoISpec, TemporalGaussian};
use crate::models::{config_digest, SentenceModelConfig, WordModelConfig};
use crate::train::{SentenceTrainConfig, StagePlan};

/// Sentence decoding: greedy without `beam`; the LM is fitted on the
/// training transcripts when `lm_order` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    #[serde(default)]
    pub beam: Option<BeamConfig>,
    #[serde(default)]
    pub lm_order: Option<usize>,
    #[serde(default = "default_add_k")]
    pub lm_add_k: f64,
}

fn default_add_k() -> f64 {
    0.01
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { beam: None, lm_order: None, lm_add_k: default_add_k() }
    }
}

fn default_smoothing() -> Option<TemporalGaussian> {
    Some(TemporalGaussian::default())
}

/// Everything one run depends on. Stored verbatim as `config.json` in the
/// run directory; its hash is stamped on every artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    /// Raw corpus manifest. Relative paths resolve against the config file.
    pub manifest: PathBuf,
    /// Prepared shard directory; when absent, shards are prepared into the
    /// cache (`FACEVSR_CACHE`).
    #[serde(default)]
    pub shards: Option<PathBuf>,
    pub roi: RoISpec,
    #[serde(default = "default_smoothing")]
    pub smoothing: Option<TemporalGaussian>,
    #[serde(default)]
    pub augment: AugmentPolicy,
    #[serde(default)]
    pub word_model: Option<WordModelConfig>,
    #[serde(default)]
    pub sentence_model: Option<SentenceModelConfig>,
    #[serde(default)]
    pub plan: Option<StagePlan>,
    #[serde(default)]
    pub sentence_train: Option<SentenceTrainConfig>,
    #[serde(default)]
    pub decode: DecodeConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    /// A word-level run on `(side, side)` mouth crops with a compact model.
    pub fn word_default(manifest: impl Into<PathBuf>, classes: usize) -> Self {
        let roi = RoISpec::new(RoIKind::MouthCentered { side: 20.0 }, (36, 36), FaceTemplate::new((36, 36)));
        let mut plan = StagePlan::stage_iii_only(30, false);
        plan.batch_size = 4;
        plan.patience = None;
        Self {
            task: Task::Word,
            manifest: manifest.into(),
            shards: None,
            roi,
            smoothing: default_smoothing(),
            augment: AugmentPolicy { random_crop_to: Some((32, 32)), ..Default::default() },
            word_model: Some(WordModelConfig::compact(classes, (32, 32))),
            sentence_model: None,
            plan: Some(plan),
            sentence_train: None,
            decode: DecodeConfig::default(),
            eval: EvalConfig::default(),
            seed: 0,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.manifest = resolve(base, &cfg.manifest);
        cfg.shards = cfg.shards.map(|s| resolve(base, &s));
        Ok(cfg)
    }

    pub fn hash(&self) -> String {
        config_digest(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The model input size implied by the crop and augmentation settings.
    pub fn input_hw(&self) -> (usize, usize) {
        self.augment.output_size(self.roi.out_size)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.roi.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.augment.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let hw = self.input_hw();
        match self.task {
            Task::Word => {
                let Some(m) = &self.word_model else { return bad("word task needs word_model".into()) };
                if (m.input_size.0, m.input_size.1) != hw {
                    return bad(format!("word_model input {:?} does not match the {hw:?} crops", (m.input_size.0, m.input_size.1)));
                }
                let Some(plan) = &self.plan else { return bad("word task needs a stage plan".into()) };
                plan.validate().map_err(|e| CliError::Config(e.to_string()))?;
            }
            Task::Sentence => {
                let Some(m) = &self.sentence_model else { return bad("sentence task needs sentence_model".into()) };
                if (m.input_size.0, m.input_size.1) != hw {
                    return bad(format!("sentence_model input {:?} does not match the {hw:?} crops", (m.input_size.0, m.input_size.1)));
                }
                if self.augment.cutout.is_some() || self.augment.random_crop_to.is_some() {
                    return bad("sentence training takes flip and jitter only; set them in sentence_train".into());
                }
            }
        }
        Ok(())
    }
}

/// `p` against `base`, made absolute so a saved config stays valid from
/// any working directory.
fn resolve(base: &Path, p: &Path) -> PathBuf {
    let joined = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    std::path::absolute(&joined).unwrap_or(joined)
}
