//! PNG rendering and the on-disk layout of diagnostics.
//!
//! Colormap ("hot"): 0 is black, 1/3 red, 2/3 yellow, 1 white, linear in
//! between.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use ndarray::{Array2, Array3};

use super::{DiagnoseError, FeatureMaps, OcclusionHeatmap, SaliencyVolume};
use crate::data::VideoClip;

pub fn colormap_hot(v: f64) -> [u8; 3] {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let ch = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [ch(3.0 * v), ch(3.0 * v - 1.0), ch(3.0 * v - 2.0)]
}

fn scaled_max(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, f64::max)
}

fn save(img: &RgbImage, path: &Path) -> Result<(), DiagnoseError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    img.save(path).map_err(|e| DiagnoseError::Image(e.to_string()))
}

/// Frames side by side, each cell blown up by `scale`.
fn tile(frames: &Array3<f64>, scale: u32, pixel: impl Fn(usize, usize, usize) -> [u8; 3]) -> RgbImage {
    let (t, h, w) = frames.dim();
    let mut img = RgbImage::new((t * w) as u32 * scale, h as u32 * scale);
    for (x, y, p) in img.enumerate_pixels_mut() {
        let (col, row) = ((x / scale) as usize, (y / scale) as usize);
        *p = Rgb(pixel(col / w, row, col % w));
    }
    img
}

/// Heat grid with cells scaled by `scale`, normalized by its largest
/// positive drop.
pub fn render_heatmap(hm: &OcclusionHeatmap, path: &Path, scale: u32) -> Result<(), DiagnoseError> {
    let grid: &Array2<f64> = &hm.grid;
    let m = scaled_max(grid.iter().copied());
    let frames = grid.clone().insert_axis(ndarray::Axis(0));
    let img = tile(&frames, scale.max(1), |_, r, c| colormap_hot(if m > 0.0 { frames[[0, r, c]] / m } else { 0.0 }));
    save(&img, path)
}

/// Saliency (positive part, per-clip max-normalized) blended over the
/// grayscale frames, one tile per frame.
pub fn render_saliency(sal: &SaliencyVolume, clip: &VideoClip, path: &Path, scale: u32) -> Result<(), DiagnoseError> {
    let m = scaled_max(sal.values.iter().copied());
    let gray = clip.to_grayscale();
    let img = tile(&sal.values, scale.max(1), |t, r, c| {
        let heat = colormap_hot(if m > 0.0 { sal.values[[t, r, c]] / m } else { 0.0 });
        let g = gray.pixels[[t, r, c, 0]];
        let mix = |h: u8| (0.5 * h as f64 + 0.5 * 255.0 * g).round().clamp(0.0, 255.0) as u8;
        [mix(heat[0]), mix(heat[1]), mix(heat[2])]
    });
    save(&img, path)
}

pub fn render_feature_maps(fm: &FeatureMaps, path: &Path, scale: u32) -> Result<(), DiagnoseError> {
    let img = tile(&fm.normalized, scale.max(1), |t, r, c| colormap_hot(fm.normalized[[t, r, c]]));
    save(&img, path)
}

/// `<run>/diagnostics/{saliency,featmaps,occlusion}/<name>.{json,png}`.
#[derive(Clone, Debug)]
pub struct DiagnosticsDir {
    pub root: PathBuf,
}

impl DiagnosticsDir {
    pub fn for_run(run: &Path) -> Self {
        Self { root: run.join("diagnostics") }
    }

    fn paths(&self, kind: &str, name: &str) -> (PathBuf, PathBuf) {
        let dir = self.root.join(kind);
        (dir.join(format!("{name}.json")), dir.join(format!("{name}.png")))
    }

    fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), DiagnoseError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_string(value).expect("diagnostic serializes"))?;
        Ok(())
    }

    pub fn write_saliency(&self, sal: &SaliencyVolume, clip: &VideoClip) -> Result<PathBuf, DiagnoseError> {
        let (json, png) = self.paths("saliency", &sal.clip_id);
        Self::write_json(&json, sal)?;
        render_saliency(sal, clip, &png, 4)?;
        Ok(json)
    }

    pub fn write_feature_maps(&self, fm: &FeatureMaps) -> Result<PathBuf, DiagnoseError> {
        let (json, png) = self.paths("featmaps", &fm.clip_id);
        Self::write_json(&json, fm)?;
        render_feature_maps(fm, &png, 8)?;
        Ok(json)
    }

    pub fn write_occlusion(&self, name: &str, hm: &OcclusionHeatmap) -> Result<PathBuf, DiagnoseError> {
        let (json, png) = self.paths("occlusion", name);
        Self::write_json(&json, hm)?;
        render_heatmap(hm, &png, 16)?;
        Ok(json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap_hot(0.0), [0, 0, 0]);
        assert_eq!(colormap_hot(1.0), [255, 255, 255]);
        assert_eq!(colormap_hot(1.0 / 3.0), [255, 0, 0]);
        assert_eq!(colormap_hot(f64::NAN), [0, 0, 0]);
    }
}
