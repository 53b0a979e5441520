//! Model inspection: channel-max feature maps, guided-backpropagation
//! saliency and spatiotemporal occlusion heatmaps.

mod render;

pub use render::{colormap_hot, render_feature_maps, render_heatmap, render_saliency, DiagnosticsDir};

use ndarray::{s, Array2, Array3, Array5, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{clips_to_batch, VideoClip};
use crate::models::{argmax_path, LayerId, ModelError, SentenceModel, WordModel};
use crate::nn::loss::softmax;
use crate::nn::{Ctx, Parameterized};

#[derive(Debug, thiserror::Error)]
pub enum DiagnoseError {
    #[error("unknown layer {0:?}")]
    UnknownLayer(String),
    #[error("patch {patch} larger than the {h}x{w} frame")]
    PatchLargerThanFrame { patch: usize, h: usize, w: usize },
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("no clips to evaluate")]
    NoClips,
    #[error("classifier failed: {0}")]
    Classifier(String),
    #[error(transparent)]
    Model(ModelError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("png: {0}")]
    Image(String),
}

impl From<ModelError> for DiagnoseError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::UnknownLayer(l) => DiagnoseError::UnknownLayer(l),
            other => DiagnoseError::Model(other),
        }
    }
}

fn clip_id(clip: &VideoClip) -> String {
    clip.meta.as_ref().map(|m| m.clip_id.clone()).unwrap_or_else(|| "clip".into())
}

/// Channel-max activations of one layer, one map per output step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureMaps {
    pub clip_id: String,
    pub layer: LayerId,
    /// `(T', h, w)` channel maxima.
    pub raw: Array3<f64>,
    /// `raw` min-max scaled to `[0, 1]` over the whole clip (zeros when flat).
    pub normalized: Array3<f64>,
}

pub fn feature_maps(model: &mut WordModel, clip: &VideoClip, layer: LayerId) -> Result<FeatureMaps, DiagnoseError> {
    let x = clips_to_batch(&[clip]).expect("single clip");
    let act = model.layer_activation(&x, layer, Ctx::eval())?;
    let a = act.index_axis(Axis(0), 0);
    let raw = a.fold_axis(Axis(0), f64::NEG_INFINITY, |m: &f64, &v| m.max(v));
    let normalized = min_max(&raw);
    Ok(FeatureMaps { clip_id: clip_id(clip), layer, raw, normalized })
}

fn min_max(a: &Array3<f64>) -> Array3<f64> {
    let lo = a.fold(f64::INFINITY, |m, &v| m.min(v));
    let hi = a.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if hi > lo {
        a.mapv(|v| (v - lo) / (hi - lo))
    } else {
        Array3::zeros(a.raw_dim())
    }
}

/// What the saliency scalar is taken of.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaliencyTarget {
    /// Pre-softmax score of one class.
    Class(usize),
    /// `sum_t log p(y_t | x)` along a per-step path (blanks included).
    Path(Vec<usize>),
    /// The greedy per-step path of the model itself.
    GreedyPath,
}

/// A network that can backpropagate a scalar score to its input under the
/// guided ReLU rule.
pub trait GuidedBackprop {
    /// d(score)/d(input) for a `(1, C, T, H, W)` input, with every ReLU
    /// using the guided rule. Also returns the resolved target and whether
    /// the output looks untrained (near-uniform).
    fn guided_input_gradient(
        &mut self,
        x: &Array5<f64>,
        target: &SaliencyTarget,
    ) -> Result<(Array5<f64>, SaliencyTarget, bool), DiagnoseError>;
}

fn near_uniform(probs: ndarray::ArrayView1<'_, f64>) -> bool {
    let k = probs.len() as f64;
    let h: f64 = probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
    h > 0.99 * k.ln()
}

impl GuidedBackprop for WordModel {
    fn guided_input_gradient(
        &mut self,
        x: &Array5<f64>,
        target: &SaliencyTarget,
    ) -> Result<(Array5<f64>, SaliencyTarget, bool), DiagnoseError> {
        let SaliencyTarget::Class(k) = *target else {
            return Err(DiagnoseError::InvalidTarget("word models take a class target".into()));
        };
        if k >= self.config().vocab_size {
            return Err(DiagnoseError::InvalidTarget(format!("class {k} outside vocabulary")));
        }
        // the gradient has to reach the input even when training froze the frontend
        let frozen = std::mem::replace(&mut self.frozen_frontend, false);
        self.zero_grad();
        let result = self.logits(x, Ctx::guided()).map(|logits| {
            let untrained = near_uniform(softmax(&logits).row(0));
            let mut d = Array2::zeros(logits.raw_dim());
            d[[0, k]] = 1.0;
            (self.backward(&d), untrained)
        });
        self.zero_grad();
        self.frozen_frontend = frozen;
        let (g, untrained) = result?;
        Ok((g, target.clone(), untrained))
    }
}

impl GuidedBackprop for SentenceModel {
    fn guided_input_gradient(
        &mut self,
        x: &Array5<f64>,
        target: &SaliencyTarget,
    ) -> Result<(Array5<f64>, SaliencyTarget, bool), DiagnoseError> {
        self.zero_grad();
        let lp = self.log_probs(x, Ctx::guided())?;
        let lp0 = lp.index_axis(Axis(0), 0);
        let probs = lp0.mapv(f64::exp);
        let path = match target {
            SaliencyTarget::GreedyPath => argmax_path(probs.view()),
            SaliencyTarget::Path(p) => p.clone(),
            SaliencyTarget::Class(_) => return Err(DiagnoseError::InvalidTarget("sentence models take a path target".into())),
        };
        let (t, k) = probs.dim();
        if path.len() != t || path.iter().any(|&c| c >= k) {
            return Err(DiagnoseError::InvalidTarget(format!("path must have {t} steps with classes < {k}")));
        }
        let untrained = probs.rows().into_iter().all(near_uniform);
        // d/dz of sum_t log softmax(z_t)[y_t] = onehot(y_t) - softmax(z_t)
        let mut d = -&probs;
        for (step, &c) in path.iter().enumerate() {
            d[[step, c]] += 1.0;
        }
        let g = self.backward(&d.insert_axis(Axis(0)));
        self.zero_grad();
        Ok((g, SaliencyTarget::Path(path), untrained))
    }
}

/// Input-shaped saliency of one clip.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SaliencyVolume {
    pub clip_id: String,
    pub target: SaliencyTarget,
    /// `(T, H, W)`, the positive part of the guided gradient (max over
    /// channels for colour input).
    pub values: Array3<f64>,
    /// Set when the model's output is close to uniform.
    pub untrained_warning: bool,
}

pub fn guided_backprop_saliency<M: GuidedBackprop + ?Sized>(
    model: &mut M,
    clip: &VideoClip,
    target: &SaliencyTarget,
) -> Result<SaliencyVolume, DiagnoseError> {
    let x = clips_to_batch(&[clip]).expect("single clip");
    let (g, target, untrained) = model.guided_input_gradient(&x, target)?;
    if untrained {
        log::warn!("saliency for {} computed on a model with near-uniform output", clip_id(clip));
    }
    let g0 = g.index_axis(Axis(0), 0);
    let values = g0.fold_axis(Axis(0), 0.0, |m: &f64, &v| m.max(v));
    Ok(SaliencyVolume { clip_id: clip_id(clip), target, values, untrained_warning: untrained })
}

/// Predicts one class index per clip.
pub trait ClipClassifier {
    fn classify(&mut self, clips: &[VideoClip]) -> Result<Vec<usize>, String>;
}

impl ClipClassifier for WordModel {
    fn classify(&mut self, clips: &[VideoClip]) -> Result<Vec<usize>, String> {
        let mut out = Vec::with_capacity(clips.len());
        for chunk in clips.chunks(32) {
            let refs: Vec<&VideoClip> = chunk.iter().collect();
            let x = clips_to_batch(&refs).ok_or("clips differ in shape")?;
            let logits = self.logits(&x, Ctx::eval()).map_err(|e| e.to_string())?;
            out.extend(logits.rows().into_iter().map(|r| {
                r.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0
            }));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcclusionConfig {
    pub patch: usize,
    pub stride: usize,
    pub fill: f64,
    /// Use only the first `n` clips.
    pub max_clips: Option<usize>,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self { patch: 7, stride: 7, fill: 0.0, max_clips: None }
    }
}

impl OcclusionConfig {
    /// `(rows, cols)`: every patch position that fits, at the stride.
    pub fn grid_dims(&self, h: usize, w: usize) -> Result<(usize, usize), DiagnoseError> {
        if self.patch == 0 || self.stride == 0 || self.patch > h || self.patch > w {
            return Err(DiagnoseError::PatchLargerThanFrame { patch: self.patch, h, w });
        }
        Ok(((h - self.patch) / self.stride + 1, (w - self.patch) / self.stride + 1))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OcclusionHeatmap {
    /// Accuracy drop `baseline - masked` per grid cell.
    pub grid: Array2<f64>,
    pub patch: usize,
    pub stride: usize,
    pub baseline: f64,
    pub num_clips: usize,
}

impl OcclusionHeatmap {
    /// Top-left pixel of cell `(r, c)`.
    pub fn cell_origin(&self, r: usize, c: usize) -> (usize, usize) {
        (r * self.stride, c * self.stride)
    }

    /// Cell with the largest drop (first in row-major order on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = ((0, 0), f64::NEG_INFINITY);
        for ((r, c), &v) in self.grid.indexed_iter() {
            if v > best.1 {
                best = ((r, c), v);
            }
        }
        best.0
    }
}

fn accuracy(classifier: &mut dyn ClipClassifier, clips: &[VideoClip], targets: &[usize]) -> Result<f64, DiagnoseError> {
    let pred = classifier.classify(clips).map_err(DiagnoseError::Classifier)?;
    Ok(pred.iter().zip(targets).filter(|(p, t)| p == t).count() as f64 / clips.len() as f64)
}

fn select<'a>(clips: &'a [VideoClip], targets: &'a [usize], cfg: &OcclusionConfig) -> Result<(&'a [VideoClip], &'a [usize]), DiagnoseError> {
    assert_eq!(clips.len(), targets.len(), "one target per clip");
    let n = cfg.max_clips.unwrap_or(clips.len()).min(clips.len());
    if n == 0 {
        return Err(DiagnoseError::NoClips);
    }
    Ok((&clips[..n], &targets[..n]))
}

/// Masks the same `patch x patch` square in every frame.
pub fn mask_clip(clip: &VideoClip, y: usize, x: usize, patch: usize, fill: f64) -> VideoClip {
    let mut out = clip.clone();
    out.pixels.slice_mut(s![.., y..y + patch, x..x + patch, ..]).fill(fill);
    out
}

/// Accuracy with the patch at cell `(r, c)` masked in every frame of every clip.
pub fn occluded_accuracy(
    classifier: &mut dyn ClipClassifier,
    clips: &[VideoClip],
    targets: &[usize],
    cell: (usize, usize),
    cfg: &OcclusionConfig,
) -> Result<f64, DiagnoseError> {
    let (clips, targets) = select(clips, targets, cfg)?;
    let (h, w) = clips[0].frame_size();
    let (rows, cols) = cfg.grid_dims(h, w)?;
    assert!(cell.0 < rows && cell.1 < cols, "cell outside the grid");
    let masked: Vec<VideoClip> =
        clips.iter().map(|c| mask_clip(c, cell.0 * cfg.stride, cell.1 * cfg.stride, cfg.patch, cfg.fill)).collect();
    accuracy(classifier, &masked, targets)
}

/// Sliding-window occlusion over the clips' (aligned) frames.
pub fn occlusion_heatmap(
    classifier: &mut dyn ClipClassifier,
    clips: &[VideoClip],
    targets: &[usize],
    cfg: &OcclusionConfig,
) -> Result<OcclusionHeatmap, DiagnoseError> {
    let (clips, targets) = select(clips, targets, cfg)?;
    let (h, w) = clips[0].frame_size();
    let (rows, cols) = cfg.grid_dims(h, w)?;
    let baseline = accuracy(classifier, clips, targets)?;
    let mut grid = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            grid[[r, c]] = baseline - occluded_accuracy(classifier, clips, targets, (r, c), cfg)?;
        }
    }
    Ok(OcclusionHeatmap { grid, patch: cfg.patch, stride: cfg.stride, baseline, num_clips: clips.len() })
}
