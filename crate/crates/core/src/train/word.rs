use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{improves, shuffle_seed, EpochEvent, EventLog, RunDir, Scope, Stage, StagePlan, StageResult, TrainError, TrainHistory};
use crate::augment::{sample_rng, AugmentPolicy};
use crate::data::{clips_to_batch, VideoClip};
use crate::models::{Backend, Checkpoint, LoadMode, WordModel};
use crate::nn::{loss::cross_entropy, Adam, AdamConfig, Ctx, Parameterized};

/// Clips with class indices.
#[derive(Clone, Debug, Default)]
pub struct LabeledSet {
    pub clips: Vec<VideoClip>,
    pub targets: Vec<usize>,
}

impl LabeledSet {
    pub fn new(clips: Vec<VideoClip>, targets: Vec<usize>) -> Self {
        assert_eq!(clips.len(), targets.len(), "one target per clip");
        Self { clips, targets }
    }

    /// Targets looked up from each clip's manifest label.
    pub fn from_labels(clips: Vec<VideoClip>, classes: &[String]) -> Result<Self, TrainError> {
        let mut targets = Vec::with_capacity(clips.len());
        for (index, c) in clips.iter().enumerate() {
            let label = c.meta.as_ref().and_then(|m| m.label.as_deref());
            let k = label.and_then(|l| classes.iter().position(|x| x == l)).ok_or_else(|| TrainError::BadSample {
                index,
                reason: format!("label {label:?} not in the class list"),
            })?;
            targets.push(k);
        }
        Ok(Self { clips, targets })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

/// Mean loss and accuracy of `model` on the evaluation view of `set`.
pub fn evaluate_word(model: &mut WordModel, set: &LabeledSet, policy: &AugmentPolicy) -> Result<(f64, f64), TrainError> {
    if set.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    let views: Vec<VideoClip> = set.clips.iter().map(|c| policy.eval(c)).collect::<Result<_, _>>()?;
    for chunk in (0..set.len()).collect::<Vec<_>>().chunks(32) {
        for group in equal_length_groups(chunk, &views) {
            let refs: Vec<&VideoClip> = group.iter().map(|&i| &views[i]).collect();
            let x = clips_to_batch(&refs).expect("grouped by shape");
            let logits = model.logits(&x, Ctx::eval())?;
            let targets: Vec<usize> = group.iter().map(|&i| set.targets[i]).collect();
            let (l, _) = cross_entropy(&logits, &targets);
            loss += l * group.len() as f64;
            correct += argmax_rows(&logits).iter().zip(&targets).filter(|(p, t)| p == t).count();
        }
    }
    Ok((loss / set.len() as f64, correct as f64 / set.len() as f64))
}

pub(crate) fn argmax_rows(logits: &ndarray::Array2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|r| r.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0)
        .collect()
}

/// Splits `indices` into runs of equally shaped clips, keeping order.
fn equal_length_groups(indices: &[usize], clips: &[VideoClip]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in indices {
        match groups.iter_mut().find(|g| clips[g[0]].pixels.dim() == clips[i].pixels.dim()) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

/// Runs the stages of `plan` in order, carrying the best weights of each
/// stage into the next.
///
/// Every epoch is logged to `log`; with a `run_dir`, each stage's best
/// checkpoint is written to `checkpoints/stage<N>-best.*`. The model ends up
/// holding the best weights of the last stage.
pub fn train_word(
    model: &mut WordModel,
    train: &LabeledSet,
    val: Option<&LabeledSet>,
    plan: &StagePlan,
    policy: &AugmentPolicy,
    seed: u64,
    log: &mut EventLog,
    run_dir: Option<&RunDir>,
) -> Result<TrainHistory, TrainError> {
    plan.validate()?;
    policy.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let mut history = TrainHistory::default();
    for (si, stage) in plan.stages.iter().enumerate() {
        let scope = stage.scope;
        let r = run_stage(model, train, val, stage, &|n| scope.contains(n), plan, policy, seed, si as u64, log)?;
        if let Some(dir) = run_dir {
            dir.save_best(&r.best)?;
        }
        history.stages.push(r);
    }
    Ok(history)
}

#[allow(clippy::too_many_arguments)]
fn run_stage(
    model: &mut WordModel,
    train: &LabeledSet,
    val: Option<&LabeledSet>,
    stage: &Stage,
    in_scope: &dyn Fn(&str) -> bool,
    plan: &StagePlan,
    policy: &AugmentPolicy,
    seed: u64,
    stage_index: u64,
    log: &mut EventLog,
) -> Result<StageResult, TrainError> {
    model.backend = stage.backend;
    let name = stage.name.to_string();
    let mut best = Checkpoint::capture(model, &name, 0, BTreeMap::new());
    let mut best_score: Option<(f64, f64)> = None;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut epochs_run = 0;
    let mut opt = Adam::new(AdamConfig { weight_decay: stage.weight_decay, ..AdamConfig::default() });
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=stage.max_epochs {
        let lr = stage.lr(epoch);
        opt.set_lr(lr);
        let epoch_key = stage_index * 100_000 + epoch as u64;
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed(seed, epoch_key)));
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(plan.batch_size) {
            let views: Vec<VideoClip> = batch
                .iter()
                .map(|&i| policy.train(&train.clips[i], &mut sample_rng(seed, i as u64, epoch_key)))
                .collect::<Result<_, _>>()?;
            model.zero_grad();
            let local: Vec<usize> = (0..batch.len()).collect();
            let mut batch_loss = 0.0;
            for group in equal_length_groups(&local, &views) {
                let refs: Vec<&VideoClip> = group.iter().map(|&j| &views[j]).collect();
                let x = clips_to_batch(&refs).expect("grouped by shape");
                let targets: Vec<usize> = group.iter().map(|&j| train.targets[batch[j]]).collect();
                let logits = model.logits(&x, Ctx::train())?;
                let (l, mut g) = cross_entropy(&logits, &targets);
                let w = group.len() as f64 / batch.len() as f64;
                g *= w;
                batch_loss += l * w;
                correct += argmax_rows(&logits).iter().zip(&targets).filter(|(p, t)| p == t).count();
                model.backward(&g);
            }
            if !batch_loss.is_finite() {
                best.restore_into(model, LoadMode::Strict)?;
                return Err(TrainError::DivergenceDetected { stage: name, epoch, last_good: Box::new(best) });
            }
            loss_sum += batch_loss * batch.len() as f64;
            opt.step(model, in_scope);
        }
        epochs_run = epoch;
        let train_loss = loss_sum / train.len() as f64;
        let train_acc = correct as f64 / train.len() as f64;
        let (score, val_metric) = match val.filter(|v| !v.is_empty()) {
            Some(v) => {
                let (vl, va) = evaluate_word(model, v, policy)?;
                ((va, vl), Some(va))
            }
            None => ((train_acc, train_loss), None),
        };
        log.push(EpochEvent { stage: name.clone(), epoch, lr, train_loss, train_metric: train_acc, val_metric })?;
        if improves(score, best_score) {
            best_score = Some(score);
            best_epoch = epoch;
            since_best = 0;
            let mut metrics = BTreeMap::from([("train_loss".to_string(), train_loss), ("train_accuracy".to_string(), train_acc)]);
            if let Some(v) = val_metric {
                metrics.insert("val_accuracy".into(), v);
            }
            best = Checkpoint::capture(model, &name, epoch, metrics);
        } else {
            since_best += 1;
            if plan.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    best.restore_into(model, LoadMode::Strict)?;
    Ok(StageResult { name, best, best_epoch, epochs_run })
}

/// Loading a source checkpoint's frontend into a target model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferPlan {
    /// Checkpoint stem (path without extension).
    pub source: PathBuf,
    /// Keep the loaded frontend fixed while fine-tuning.
    pub freeze: bool,
    pub fine_tune_epochs: usize,
}

/// Copies the source frontend into `target` and applies the freeze flag.
/// Returns the source checkpoint.
pub fn transfer_frontend(target: &mut WordModel, plan: &TransferPlan) -> Result<Checkpoint, TrainError> {
    let source = Checkpoint::load(&plan.source)?;
    source.restore_into(target, LoadMode::FrontendOnly)?;
    target.frozen_frontend = plan.freeze;
    Ok(source)
}

/// Fine-tunes the full Bi-GRU model after [`transfer_frontend`]; with a
/// frozen frontend only backend parameters are updated.
#[allow(clippy::too_many_arguments)]
pub fn fine_tune_word(
    model: &mut WordModel,
    train: &LabeledSet,
    val: Option<&LabeledSet>,
    plan: &TransferPlan,
    batch_size: usize,
    policy: &AugmentPolicy,
    seed: u64,
    log: &mut EventLog,
) -> Result<StageResult, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let cutout = policy.cutout.is_some();
    let stage = Stage {
        scope: if plan.freeze { Scope::BackendOnly } else { Scope::Full },
        backend: Backend::BiGru,
        ..Stage::stage_iii(plan.fine_tune_epochs, cutout)
    };
    let stage_plan = StagePlan { stages: vec![stage.clone()], batch_size, patience: None };
    stage_plan.validate()?;
    let scope = stage.scope;
    // stage key 3 keeps augmentation seeds apart from stages I-III
    let r = run_stage(model, train, val, &stage, &|n| scope.contains(n), &stage_plan, policy, seed, 3, log)?;
    Ok(StageResult { name: "transfer".into(), ..r })
}
