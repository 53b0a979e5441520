//! Bilinear sampling on `(H, W, C)` images.
//!
//! Coordinates follow the pixel-centre convention: pixel `(r, c)` covers
//! `[c - 0.5, c + 0.5] x [r - 0.5, r + 0.5]` and its value sits at `(c, r)`.
//! Samples outside the image read zero.

use ndarray::Array3;

use super::SimilarityTransform;

/// Axis-aligned rectangle in edge coordinates (`y0`/`x0` is the top-left
/// edge, not a pixel centre).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub y0: f64,
    pub x0: f64,
    pub h: f64,
    pub w: f64,
}

impl Rect {
    pub fn new(y0: f64, x0: f64, h: f64, w: f64) -> Self {
        Self { y0, x0, h, w }
    }

    /// Area shared with a `height x width` image.
    pub fn overlap_area(&self, height: usize, width: usize) -> f64 {
        let oy = (self.y0 + self.h).min(height as f64) - self.y0.max(0.0);
        let ox = (self.x0 + self.w).min(width as f64) - self.x0.max(0.0);
        oy.max(0.0) * ox.max(0.0)
    }
}

fn texel(img: &Array3<f64>, r: isize, c: isize, ch: usize) -> f64 {
    let (h, w, _) = img.dim();
    if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
        0.0
    } else {
        img[[r as usize, c as usize, ch]]
    }
}

pub fn sample_bilinear(img: &Array3<f64>, x: f64, y: f64, ch: usize) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (xi, yi) = (x0 as isize, y0 as isize);
    let a = texel(img, yi, xi, ch);
    let b = texel(img, yi, xi + 1, ch);
    let c = texel(img, yi + 1, xi, ch);
    let d = texel(img, yi + 1, xi + 1, ch);
    (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
}

/// Resamples `rect` of `img` onto an `out_h x out_w` grid.
pub fn sample_rect(img: &Array3<f64>, rect: Rect, out: (usize, usize)) -> Array3<f64> {
    let (out_h, out_w) = out;
    let ch = img.dim().2;
    let sy = rect.h / out_h as f64;
    let sx = rect.w / out_w as f64;
    Array3::from_shape_fn((out_h, out_w, ch), |(r, c, k)| {
        let y = rect.y0 + (r as f64 + 0.5) * sy - 0.5;
        let x = rect.x0 + (c as f64 + 0.5) * sx - 0.5;
        sample_bilinear(img, x, y, k)
    })
}

pub fn resize(img: &Array3<f64>, out: (usize, usize)) -> Array3<f64> {
    let (h, w, _) = img.dim();
    if (h, w) == out {
        return img.clone();
    }
    sample_rect(img, Rect::new(0.0, 0.0, h as f64, w as f64), out)
}

/// Output pixel `p` takes the input value at `transform^-1(p)`.
pub fn warp(img: &Array3<f64>, transform: &SimilarityTransform, out: (usize, usize)) -> Array3<f64> {
    let inv = transform.inverse();
    let ch = img.dim().2;
    Array3::from_shape_fn((out.0, out.1, ch), |(r, c, k)| {
        let [x, y] = inv.apply([c as f64, r as f64]);
        sample_bilinear(img, x, y, k)
    })
}
