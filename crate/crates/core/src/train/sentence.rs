use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{improves, shuffle_seed, EpochEvent, EventLog, RunDir, StageResult, TrainError, TrainHistory};
use crate::augment::{sample_rng, sample_seed, AugmentPolicy};
use crate::data::{clips_to_batch, VideoClip};
use crate::eval::{ctc::collapse, wer_counts};
use crate::models::{argmax_path, Checkpoint, LoadMode, SentenceModel, BLANK};
use crate::nn::{loss::ctc_loss, Adam, AdamConfig, Ctx, Parameterized};

/// Clips with transcripts.
#[derive(Clone, Debug, Default)]
pub struct TranscribedSet {
    pub clips: Vec<VideoClip>,
    pub transcripts: Vec<String>,
}

impl TranscribedSet {
    pub fn new(clips: Vec<VideoClip>, transcripts: Vec<String>) -> Self {
        assert_eq!(clips.len(), transcripts.len(), "one transcript per clip");
        Self { clips, transcripts }
    }

    /// Transcripts taken from each clip's manifest entry.
    pub fn from_meta(clips: Vec<VideoClip>) -> Result<Self, TrainError> {
        let mut transcripts = Vec::with_capacity(clips.len());
        for (index, c) in clips.iter().enumerate() {
            let t = c.meta.as_ref().and_then(|m| m.transcript.clone());
            transcripts.push(t.ok_or(TrainError::BadSample { index, reason: "no transcript".into() })?);
        }
        Ok(Self { clips, transcripts })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceTrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hflip_prob: f64,
    pub temporal_jitter_prob: f64,
    pub patience: Option<usize>,
}

impl Default for SentenceTrainConfig {
    fn default() -> Self {
        Self { lr: 1e-4, weight_decay: 0.0, epochs: 30, batch_size: 8, hflip_prob: 0.5, temporal_jitter_prob: 0.05, patience: None }
    }
}

impl SentenceTrainConfig {
    /// Flip and temporal jitter only; no cropping or Cutout.
    pub fn policy(&self) -> AugmentPolicy {
        AugmentPolicy { hflip_prob: self.hflip_prob, temporal_jitter_prob: self.temporal_jitter_prob, ..Default::default() }
    }
}

/// Greedy transcript of one clip.
pub(crate) fn greedy_transcript(model: &mut SentenceModel, clip: &VideoClip) -> Result<String, TrainError> {
    let x = clips_to_batch(&[clip]).expect("single clip");
    let probs = model.forward(&x, Ctx::eval())?;
    let path = argmax_path(probs.index_axis(ndarray::Axis(0), 0));
    Ok(model.config().decode_classes(&collapse(&path)))
}

/// Corpus WER of greedy decoding over `set`.
fn greedy_wer(model: &mut SentenceModel, set: &TranscribedSet) -> Result<f64, TrainError> {
    let (mut edits, mut words) = (0usize, 0usize);
    for (clip, truth) in set.clips.iter().zip(&set.transcripts) {
        let hyp = greedy_transcript(model, clip)?;
        let (e, n) = wer_counts(truth, &hyp);
        edits += e;
        words += n;
    }
    Ok(if words == 0 { 0.0 } else { edits as f64 / words as f64 })
}

/// CTC training with a fixed learning rate. Samples in a batch are run one
/// at a time (their lengths differ after jitter) and their gradients summed.
pub fn train_sentence(
    model: &mut SentenceModel,
    train: &TranscribedSet,
    val: Option<&TranscribedSet>,
    cfg: &SentenceTrainConfig,
    seed: u64,
    log: &mut EventLog,
    run_dir: Option<&RunDir>,
) -> Result<TrainHistory, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyData);
    }
    if !(cfg.lr > 0.0) || cfg.batch_size == 0 {
        return Err(TrainError::InvalidPlan("lr and batch_size must be positive".into()));
    }
    let policy = cfg.policy();
    policy.validate()?;
    let labels: Vec<Vec<usize>> = train
        .transcripts
        .iter()
        .enumerate()
        .map(|(index, t)| model.config().encode(t).map_err(|e| TrainError::BadSample { index, reason: e.to_string() }))
        .collect::<Result<_, _>>()?;
    let name = "ctc".to_string();
    let mut best = Checkpoint::capture(model, &name, 0, BTreeMap::new());
    let (mut best_score, mut best_epoch, mut since_best, mut epochs_run) = (None, 0, 0, 0);
    let mut opt = Adam::new(AdamConfig { lr: cfg.lr, weight_decay: cfg.weight_decay, ..AdamConfig::default() });
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        let epoch_key = epoch as u64;
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed(seed, epoch_key)));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.zero_grad();
            let mut batch_loss = 0.0;
            for &i in batch {
                let mut view = policy.train(&train.clips[i], &mut sample_rng(seed, i as u64, epoch_key))?;
                let needed = labels[i].len() + labels[i].windows(2).filter(|w| w[0] == w[1]).count();
                if model.config().temporal_out_len(view.frames()) < needed {
                    // jitter removed too many frames for this transcript
                    view = train.clips[i].clone();
                }
                model.reseed_dropout(sample_seed(seed ^ 0xd50, i as u64, epoch_key));
                let x = clips_to_batch(&[&view]).expect("single clip");
                let lp = model.log_probs(&x, Ctx::train())?;
                let (nll, g) = ctc_loss(lp.index_axis(ndarray::Axis(0), 0), &labels[i], BLANK);
                batch_loss += nll / batch.len() as f64;
                let g = (g / batch.len() as f64).insert_axis(ndarray::Axis(0));
                model.backward(&g);
            }
            if !batch_loss.is_finite() {
                best.restore_into(model, LoadMode::Strict)?;
                return Err(TrainError::DivergenceDetected { stage: name, epoch, last_good: Box::new(best) });
            }
            loss_sum += batch_loss * batch.len() as f64;
            opt.step(model, &|_| true);
        }
        epochs_run = epoch;
        let train_loss = loss_sum / train.len() as f64;
        let train_wer = greedy_wer(model, train)?;
        let val_wer = match val.filter(|v| !v.is_empty()) {
            Some(v) => Some(greedy_wer(model, v)?),
            None => None,
        };
        log.push(EpochEvent { stage: name.clone(), epoch, lr: cfg.lr, train_loss, train_metric: train_wer, val_metric: val_wer })?;
        // lower WER is better
        let score = (-val_wer.unwrap_or(train_wer), train_loss);
        if improves(score, best_score) {
            best_score = Some(score);
            best_epoch = epoch;
            since_best = 0;
            let mut metrics = BTreeMap::from([("train_loss".to_string(), train_loss), ("train_wer".to_string(), train_wer)]);
            if let Some(v) = val_wer {
                metrics.insert("val_wer".into(), v);
            }
            best = Checkpoint::capture(model, &name, epoch, metrics);
        } else {
            since_best += 1;
            if cfg.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    best.restore_into(model, LoadMode::Strict)?;
    if let Some(dir) = run_dir {
        dir.save_best(&best)?;
    }
    Ok(TrainHistory { stages: vec![StageResult { name, best, best_epoch, epochs_run }] })
}
