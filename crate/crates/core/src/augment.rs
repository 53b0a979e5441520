//! Training-time clip augmentation. Every spatial transform is drawn once per
//! clip and applied to all frames.
//!
//! Policy order: random crop, horizontal flip, Cutout, temporal jitter.

use ndarray::{s, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::VideoClip;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AugmentError {
    #[error("cutout patch {patch:?} larger than frame {frame:?}")]
    PatchLargerThanFrame { patch: (usize, usize), frame: (usize, usize) },
    #[error("crop {crop:?} larger than frame {frame:?}")]
    CropLargerThanFrame { crop: (usize, usize), frame: (usize, usize) },
    #[error("probability {name} = {value} outside [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },
}

fn check_prob(name: &'static str, value: f64) -> Result<(), AugmentError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(AugmentError::InvalidProbability { name, value })
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoutConfig {
    pub patch_h: usize,
    pub patch_w: usize,
    #[serde(default = "one")]
    pub apply_prob: f64,
    #[serde(default)]
    pub fill_value: f64,
}

impl CutoutConfig {
    pub fn new(patch_h: usize, patch_w: usize) -> Self {
        Self { patch_h, patch_w, apply_prob: 1.0, fill_value: 0.0 }
    }

    /// Square patch of side `width * num / den`, which must divide exactly.
    pub fn fraction(width: usize, num: usize, den: usize) -> Option<Self> {
        (width * num % den == 0).then(|| Self::new(width * num / den, width * num / den))
    }

    /// Half the input width, the tuned default.
    pub fn half(width: usize) -> Self {
        Self::new(width / 2, width / 2)
    }

    /// Patch-size sweep `W/4, 3W/8, W/2, 5W/8`.
    pub fn size_grid(width: usize) -> Option<[Self; 4]> {
        Some([
            Self::fraction(width, 1, 4)?,
            Self::fraction(width, 3, 8)?,
            Self::fraction(width, 1, 2)?,
            Self::fraction(width, 5, 8)?,
        ])
    }
}

/// Top-left corner of an applied patch.
pub type Offset = (usize, usize);

fn frame_hw(clip: &VideoClip) -> (usize, usize) {
    clip.frame_size()
}

/// Zeroes one patch at the same position in every frame. Returns the clip
/// and the patch corner, or `None` when the draw skipped the clip.
pub fn cutout_with_offset(
    clip: &VideoClip,
    cfg: &CutoutConfig,
    rng: &mut impl Rng,
) -> Result<(VideoClip, Option<Offset>), AugmentError> {
    check_prob("apply_prob", cfg.apply_prob)?;
    let (h, w) = frame_hw(clip);
    if cfg.patch_h > h || cfg.patch_w > w {
        return Err(AugmentError::PatchLargerThanFrame { patch: (cfg.patch_h, cfg.patch_w), frame: (h, w) });
    }
    if !rng.gen_bool(cfg.apply_prob) {
        return Ok((clip.clone(), None));
    }
    let r = rng.gen_range(0..=h - cfg.patch_h);
    let c = rng.gen_range(0..=w - cfg.patch_w);
    let mut out = clip.clone();
    out.pixels.slice_mut(s![.., r..r + cfg.patch_h, c..c + cfg.patch_w, ..]).fill(cfg.fill_value);
    Ok((out, Some((r, c))))
}

pub fn cutout(clip: &VideoClip, cfg: &CutoutConfig, rng: &mut impl Rng) -> Result<VideoClip, AugmentError> {
    cutout_with_offset(clip, cfg, rng).map(|(c, _)| c)
}

/// Draws a crop corner uniformly from `[0, H - out_h] x [0, W - out_w]`.
pub fn crop_offset(frame: (usize, usize), out: (usize, usize), rng: &mut impl Rng) -> Result<Offset, AugmentError> {
    if out.0 > frame.0 || out.1 > frame.1 {
        return Err(AugmentError::CropLargerThanFrame { crop: out, frame });
    }
    Ok((rng.gen_range(0..=frame.0 - out.0), rng.gen_range(0..=frame.1 - out.1)))
}

/// `floor((H - out_h) / 2)`, `floor((W - out_w) / 2)`.
pub fn central_offset(frame: (usize, usize), out: (usize, usize)) -> Result<Offset, AugmentError> {
    if out.0 > frame.0 || out.1 > frame.1 {
        return Err(AugmentError::CropLargerThanFrame { crop: out, frame });
    }
    Ok(((frame.0 - out.0) / 2, (frame.1 - out.1) / 2))
}

pub fn crop_at(clip: &VideoClip, offset: Offset, out: (usize, usize)) -> Result<VideoClip, AugmentError> {
    let frame = frame_hw(clip);
    if offset.0 + out.0 > frame.0 || offset.1 + out.1 > frame.1 {
        return Err(AugmentError::CropLargerThanFrame { crop: out, frame });
    }
    let px = clip.pixels.slice(s![.., offset.0..offset.0 + out.0, offset.1..offset.1 + out.1, ..]).to_owned();
    Ok(VideoClip { pixels: px, meta: clip.meta.clone() })
}

pub fn random_crop_consistent(clip: &VideoClip, out: (usize, usize), rng: &mut impl Rng) -> Result<VideoClip, AugmentError> {
    let off = crop_offset(frame_hw(clip), out, rng)?;
    crop_at(clip, off, out)
}

pub fn central_crop(clip: &VideoClip, out: (usize, usize)) -> Result<VideoClip, AugmentError> {
    let off = central_offset(frame_hw(clip), out)?;
    crop_at(clip, off, out)
}

/// Mirrors every frame (column `j` goes to `W - 1 - j`).
pub fn flip_horizontal(clip: &VideoClip) -> VideoClip {
    let px = clip.pixels.slice(s![.., .., ..;-1, ..]).to_owned();
    VideoClip { pixels: px, meta: clip.meta.clone() }
}

/// Mirrors all frames together with probability `prob`.
pub fn hflip(clip: &VideoClip, rng: &mut impl Rng, prob: f64) -> Result<VideoClip, AugmentError> {
    check_prob("hflip_prob", prob)?;
    Ok(if rng.gen_bool(prob) { flip_horizontal(clip) } else { clip.clone() })
}

/// Per-frame duplicate / delete probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalJitter {
    pub p_dup: f64,
    pub p_del: f64,
}

impl TemporalJitter {
    pub fn symmetric(p: f64) -> Self {
        Self { p_dup: p, p_del: p }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        check_prob("p_dup", self.p_dup)?;
        check_prob("p_del", self.p_del)?;
        check_prob("p_dup + p_del", self.p_dup + self.p_del)
    }

    /// Source frame index of every output frame. One uniform draw per frame:
    /// below `p_del` drops it, below `p_del + p_dup` repeats it. If every
    /// frame is dropped the first one is kept.
    pub fn frame_map(&self, frames: usize, rng: &mut impl Rng) -> Result<Vec<usize>, AugmentError> {
        self.validate()?;
        let mut map = Vec::with_capacity(frames + frames / 8);
        for t in 0..frames {
            let u: f64 = rng.gen();
            if u < self.p_del {
                continue;
            }
            map.push(t);
            if u < self.p_del + self.p_dup {
                map.push(t);
            }
        }
        if map.is_empty() && frames > 0 {
            map.push(0);
        }
        Ok(map)
    }

    pub fn apply(&self, clip: &VideoClip, rng: &mut impl Rng) -> Result<VideoClip, AugmentError> {
        if self.p_dup == 0.0 && self.p_del == 0.0 {
            self.validate()?;
            return Ok(clip.clone());
        }
        let map = self.frame_map(clip.frames(), rng)?;
        Ok(VideoClip { pixels: clip.pixels.select(Axis(0), &map), meta: clip.meta.clone() })
    }
}

/// Duplicates or deletes each frame with probability `prob` each.
pub fn temporal_jitter(clip: &VideoClip, prob: f64, rng: &mut impl Rng) -> Result<VideoClip, AugmentError> {
    TemporalJitter::symmetric(prob).apply(clip, rng)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    #[serde(default)]
    pub cutout: Option<CutoutConfig>,
    /// Train-time random crop size; evaluation takes the central crop.
    #[serde(default)]
    pub random_crop_to: Option<(usize, usize)>,
    #[serde(default)]
    pub hflip_prob: f64,
    #[serde(default)]
    pub temporal_jitter_prob: f64,
}

impl AugmentPolicy {
    pub fn validate(&self) -> Result<(), AugmentError> {
        check_prob("hflip_prob", self.hflip_prob)?;
        TemporalJitter::symmetric(self.temporal_jitter_prob).validate()?;
        if let Some(c) = &self.cutout {
            check_prob("apply_prob", c.apply_prob)?;
            if let Some(crop) = self.random_crop_to {
                if c.patch_h > crop.0 || c.patch_w > crop.1 {
                    return Err(AugmentError::PatchLargerThanFrame { patch: (c.patch_h, c.patch_w), frame: crop });
                }
            }
        }
        Ok(())
    }

    pub fn train(&self, clip: &VideoClip, rng: &mut impl Rng) -> Result<VideoClip, AugmentError> {
        let mut out = match self.random_crop_to {
            Some(size) => random_crop_consistent(clip, size, rng)?,
            None => clip.clone(),
        };
        if self.hflip_prob > 0.0 {
            out = hflip(&out, rng, self.hflip_prob)?;
        }
        if let Some(c) = &self.cutout {
            out = cutout(&out, c, rng)?;
        }
        if self.temporal_jitter_prob > 0.0 {
            out = temporal_jitter(&out, self.temporal_jitter_prob, rng)?;
        }
        Ok(out)
    }

    /// Deterministic evaluation view: central crop only.
    pub fn eval(&self, clip: &VideoClip) -> Result<VideoClip, AugmentError> {
        match self.random_crop_to {
            Some(size) => central_crop(clip, size),
            None => Ok(clip.clone()),
        }
    }

    /// Input `(H, W)` the model sees for `frame` sized clips.
    pub fn output_size(&self, frame: (usize, usize)) -> (usize, usize) {
        self.random_crop_to.unwrap_or(frame)
    }
}

/// Seed for one clip in one epoch, independent of worker scheduling.
pub fn sample_seed(global_seed: u64, clip_index: u64, epoch: u64) -> u64 {
    let mut z = global_seed;
    for v in [clip_index, epoch] {
        z = splitmix(z ^ splitmix(v));
    }
    z
}

pub fn sample_rng(global_seed: u64, clip_index: u64, epoch: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sample_seed(global_seed, clip_index, epoch))
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
