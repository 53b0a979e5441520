//! Landmark smoothing, similarity alignment to a canonical face template,
//! and the facial RoI crops.

pub mod raster;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::data::{LandmarkTrack, VideoClip};
pub use raster::Rect;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("region {0:?} does not overlap the {1}x{2} image")]
    RegionOutOfFrame(Rect, usize, usize),
    #[error("landmark {index} (1-based) missing from a {count}-point set")]
    MissingLandmark { index: usize, count: usize },
    #[error("invalid RoI spec: {0}")]
    InvalidSpec(String),
    #[error("clip has {frames} frames but the landmark track has {landmarks}")]
    TrackLength { frames: usize, landmarks: usize },
}

pub type Point = [f64; 2];

/// 1-based ibug-68 indices used by alignment and the RoI rules.
pub mod ibug68 {
    pub const RIGHT_EYE: std::ops::RangeInclusive<usize> = 37..=42;
    pub const LEFT_EYE: std::ops::RangeInclusive<usize> = 43..=48;
    pub const NOSE_TIP: usize = 31;
    pub const OUTER_LIP: std::ops::RangeInclusive<usize> = 49..=60;
    pub const INNER_LIP: std::ops::RangeInclusive<usize> = 61..=68;
    /// Outer brow ends and two lower-lip points: the cheek strip is centred
    /// on the mean y of these.
    pub const CHEEK_ANCHORS: [usize; 4] = [18, 27, 57, 59];
    pub const COUNT: usize = 68;
}

/// Temporal Gaussian smoothing of every landmark coordinate.
///
/// The kernel spans `2 * radius + 1` frames; near the clip ends the kernel
/// is truncated and renormalized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalGaussian {
    pub sigma: f64,
    pub radius: usize,
}

impl Default for TemporalGaussian {
    /// Three-tap kernel.
    fn default() -> Self {
        Self { sigma: 1.0, radius: 1 }
    }
}

impl TemporalGaussian {
    pub fn taps(&self) -> Vec<f64> {
        let r = self.radius as isize;
        (-r..=r).map(|k| (-(k * k) as f64 / (2.0 * self.sigma * self.sigma)).exp()).collect()
    }

    pub fn smooth_sequence(&self, xs: &[f64]) -> Vec<f64> {
        let taps = self.taps();
        let r = self.radius as isize;
        let n = xs.len() as isize;
        (0..n)
            .map(|t| {
                let mut acc = 0.0;
                let mut norm = 0.0;
                for (i, w) in taps.iter().enumerate() {
                    let s = t + i as isize - r;
                    if (0..n).contains(&s) {
                        acc += w * xs[s as usize];
                        norm += w;
                    }
                }
                acc / norm
            })
            .collect()
    }
}

pub fn smooth_landmarks(track: &LandmarkTrack, kernel: TemporalGaussian) -> LandmarkTrack {
    let mut out = track.clone();
    let (t, l, _) = track.points.dim();
    if t <= 1 {
        return out;
    }
    for j in 0..l {
        for d in 0..2 {
            let seq: Vec<f64> = (0..t).map(|i| track.points[[i, j, d]]).collect();
            for (i, v) in kernel.smooth_sequence(&seq).into_iter().enumerate() {
                out.points[[i, j, d]] = v;
            }
        }
    }
    out
}

/// `p -> scale * R(rotation) * p + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: f64,
    pub translation: Point,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self { scale: 1.0, rotation: 0.0, translation: [0.0, 0.0] }
    }

    pub fn new(scale: f64, rotation: f64, translation: Point) -> Self {
        Self { scale, rotation, translation }
    }

    /// Row-major 2x3 matrix `[[a, -b, tx], [b, a, ty]]`.
    pub fn matrix(&self) -> [[f64; 3]; 2] {
        let a = self.scale * self.rotation.cos();
        let b = self.scale * self.rotation.sin();
        [[a, -b, self.translation[0]], [b, a, self.translation[1]]]
    }

    pub fn apply(&self, p: Point) -> Point {
        let m = self.matrix();
        [m[0][0] * p[0] + m[0][1] * p[1] + m[0][2], m[1][0] * p[0] + m[1][1] * p[1] + m[1][2]]
    }

    pub fn inverse(&self) -> Self {
        let s = 1.0 / self.scale;
        let r = -self.rotation;
        let rot = Self { scale: s, rotation: r, translation: [0.0, 0.0] };
        let t = rot.apply(self.translation);
        Self { scale: s, rotation: r, translation: [-t[0], -t[1]] }
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &Self) -> Self {
        let lin = Self { translation: [0.0, 0.0], ..*self };
        let t = lin.apply(first.translation);
        Self {
            scale: self.scale * first.scale,
            rotation: wrap_angle(self.rotation + first.rotation),
            translation: [t[0] + self.translation[0], t[1] + self.translation[1]],
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut a = a % tau;
    if a <= -std::f64::consts::PI {
        a += tau;
    } else if a > std::f64::consts::PI {
        a -= tau;
    }
    a
}

/// Least-squares similarity transform taking `src` onto `dst`.
///
/// Closed-form Procrustes: with centred point sets, the linear part
/// `[[a, -b], [b, a]]` has `a = sum(s . d) / sum|s|^2` and
/// `b = sum(s x d) / sum|s|^2`; translation aligns the centroids.
pub fn fit_similarity(src: &[Point], dst: &[Point]) -> Result<SimilarityTransform, GeometryError> {
    if src.len() != dst.len() || src.len() < 2 {
        return Err(GeometryError::DegenerateConfiguration(format!(
            "need >= 2 point pairs, got {} and {}",
            src.len(),
            dst.len()
        )));
    }
    let n = src.len() as f64;
    let centroid = |pts: &[Point]| {
        let s = pts.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
        [s[0] / n, s[1] / n]
    };
    let ms = centroid(src);
    let md = centroid(dst);
    let (mut dot, mut cross, mut norm) = (0.0, 0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (sx, sy) = (s[0] - ms[0], s[1] - ms[1]);
        let (dx, dy) = (d[0] - md[0], d[1] - md[1]);
        dot += sx * dx + sy * dy;
        cross += sx * dy - sy * dx;
        norm += sx * sx + sy * sy;
    }
    let spread = src.iter().map(|p| (p[0] - ms[0]).abs().max((p[1] - ms[1]).abs())).fold(0.0, f64::max);
    if norm <= 0.0 || spread <= 1e-12 * (1.0 + ms[0].abs().max(ms[1].abs())) {
        return Err(GeometryError::DegenerateConfiguration("all source points coincide".into()));
    }
    let a = dot / norm;
    let b = cross / norm;
    let scale = a.hypot(b);
    if scale <= 0.0 {
        return Err(GeometryError::DegenerateConfiguration("destination points coincide".into()));
    }
    let lin = SimilarityTransform::new(scale, b.atan2(a), [0.0, 0.0]);
    let r = lin.apply(ms);
    Ok(SimilarityTransform::new(scale, lin.rotation, [md[0] - r[0], md[1] - r[1]]))
}

/// Sum of squared residuals of `t` on the point pairs.
pub fn residual(t: &SimilarityTransform, src: &[Point], dst: &[Point]) -> f64 {
    src.iter()
        .zip(dst)
        .map(|(s, d)| {
            let p = t.apply(*s);
            (p[0] - d[0]).powi(2) + (p[1] - d[1]).powi(2)
        })
        .sum()
}

/// Canonical positions of the eye centres and nose tip in a face frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceTemplate {
    /// `(H, W)` of the aligned face.
    pub size: (usize, usize),
}

impl FaceTemplate {
    /// Face-unit coordinates of right eye, left eye, nose tip.
    pub const UNIT_POINTS: [Point; 3] = [[0.31, 0.38], [0.69, 0.38], [0.50, 0.60]];

    pub fn new(size: (usize, usize)) -> Self {
        Self { size }
    }

    pub fn word_level() -> Self {
        Self::new((122, 122))
    }

    pub fn sentence_level() -> Self {
        Self::new((100, 100))
    }

    /// Face units (`[0,1]^2` spans the frame edge to edge) to pixel centres.
    pub fn to_pixels(&self, u: Point) -> Point {
        [u[0] * self.size.1 as f64 - 0.5, u[1] * self.size.0 as f64 - 0.5]
    }

    pub fn to_units(&self, p: Point) -> Point {
        [(p[0] + 0.5) / self.size.1 as f64, (p[1] + 0.5) / self.size.0 as f64]
    }

    pub fn points(&self) -> [Point; 3] {
        Self::UNIT_POINTS.map(|u| self.to_pixels(u))
    }
}

fn landmark(points: &Array2<f64>, one_based: usize) -> Result<Point, GeometryError> {
    let count = points.nrows();
    if one_based == 0 || one_based > count {
        return Err(GeometryError::MissingLandmark { index: one_based, count });
    }
    Ok([points[[one_based - 1, 0]], points[[one_based - 1, 1]]])
}

fn mean_landmark(points: &Array2<f64>, idx: impl IntoIterator<Item = usize>) -> Result<Point, GeometryError> {
    let mut s = [0.0, 0.0];
    let mut n = 0.0;
    for i in idx {
        let p = landmark(points, i)?;
        s[0] += p[0];
        s[1] += p[1];
        n += 1.0;
    }
    Ok([s[0] / n, s[1] / n])
}

/// Right-eye centre, left-eye centre and nose tip of an ibug-68 set.
pub fn alignment_anchors(points: &Array2<f64>) -> Result<[Point; 3], GeometryError> {
    Ok([
        mean_landmark(points, ibug68::RIGHT_EYE)?,
        mean_landmark(points, ibug68::LEFT_EYE)?,
        landmark(points, ibug68::NOSE_TIP)?,
    ])
}

/// Mean of the outer-lip landmarks.
pub fn mouth_center(points: &Array2<f64>) -> Result<Point, GeometryError> {
    mean_landmark(points, ibug68::OUTER_LIP)
}

/// Result of aligning one frame.
#[derive(Clone, Debug)]
pub struct Aligned {
    pub image: Array3<f64>,
    /// Frame pixels -> aligned pixels.
    pub transform: SimilarityTransform,
    /// Landmarks mapped into the aligned frame.
    pub landmarks: Array2<f64>,
}

pub fn transform_points(t: &SimilarityTransform, points: &Array2<f64>) -> Array2<f64> {
    let mut out = points.clone();
    for mut row in out.rows_mut() {
        let p = t.apply([row[0], row[1]]);
        row[0] = p[0];
        row[1] = p[1];
    }
    out
}

/// Warps `frame` so its eye centres and nose tip land on the template.
/// Roll is removed; yaw and pitch are left in the image.
pub fn align_face(frame: &Array3<f64>, landmarks: &Array2<f64>, template: &FaceTemplate) -> Result<Aligned, GeometryError> {
    let src = alignment_anchors(landmarks)?;
    let transform = fit_similarity(&src, &template.points())?;
    let image = raster::warp(frame, &transform, template.size);
    Ok(Aligned { image, transform, landmarks: transform_points(&transform, landmarks) })
}

/// Crop geometry for one region of interest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoIKind {
    /// Constant box on the unaligned frame.
    MouthFixedBox { rect: Rect },
    /// Square of side `side` px centred on the outer-lip landmark mean of the
    /// unaligned frame.
    MouthCentered { side: f64 },
    /// The whole aligned face.
    FaceAligned,
    /// Constant box on the unaligned frame (pre-registered faces).
    FaceDirect { rect: Rect },
    /// Top half of the aligned face.
    UpperFace,
    /// Full-width strip of the aligned face, vertically centred on the mean y
    /// of the cheek anchor landmarks.
    Cheeks { strip_height: f64, strip_width: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoISpec {
    #[serde(flatten)]
    pub kind: RoIKind,
    /// `(H, W)` of the produced crop.
    pub out_size: (usize, usize),
    /// Aligned face frame used by the aligned kinds.
    pub template: FaceTemplate,
}

impl RoISpec {
    pub fn new(kind: RoIKind, out_size: (usize, usize), template: FaceTemplate) -> Self {
        Self { kind, out_size, template }
    }

    /// Whether frames are aligned to the template before cropping.
    pub fn needs_alignment(&self) -> bool {
        matches!(self.kind, RoIKind::FaceAligned | RoIKind::UpperFace | RoIKind::Cheeks { .. })
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidSpec(m.to_string()));
        if self.out_size.0 == 0 || self.out_size.1 == 0 {
            return bad("out_size must be positive");
        }
        if self.template.size.0 == 0 || self.template.size.1 == 0 {
            return bad("template size must be positive");
        }
        match &self.kind {
            RoIKind::MouthFixedBox { rect } | RoIKind::FaceDirect { rect } if rect.h <= 0.0 || rect.w <= 0.0 => {
                bad("box must have positive extent")
            }
            RoIKind::MouthCentered { side } if *side <= 0.0 => bad("side must be positive"),
            RoIKind::Cheeks { strip_height, strip_width } if *strip_height <= 0.0 || *strip_width <= 0.0 => {
                bad("strip must have positive extent")
            }
            _ => Ok(()),
        }
    }

    /// Word-level cheeks: 40x112 strip of a 122x122 aligned face, resized to 112x112.
    pub fn word_cheeks() -> Self {
        Self::new(RoIKind::Cheeks { strip_height: 40.0, strip_width: 112.0 }, (112, 112), FaceTemplate::word_level())
    }

    /// Sentence-level cheeks: 36x100 strip of a 100x100 face, resized to 50x100.
    pub fn sentence_cheeks() -> Self {
        Self::new(RoIKind::Cheeks { strip_height: 36.0, strip_width: 100.0 }, (50, 100), FaceTemplate::sentence_level())
    }

    /// The same geometry rescaled to a `side x side` aligned face.
    pub fn scaled_to(&self, side: usize) -> Self {
        let f = side as f64 / self.template.size.1 as f64;
        let kind = match &self.kind {
            RoIKind::Cheeks { strip_height, strip_width } => {
                RoIKind::Cheeks { strip_height: (strip_height * f).round(), strip_width: (strip_width * f).round() }
            }
            RoIKind::MouthCentered { side } => RoIKind::MouthCentered { side: (side * f).round() },
            other => other.clone(),
        };
        let out = ((self.out_size.0 as f64 * f).round() as usize, (self.out_size.1 as f64 * f).round() as usize);
        Self::new(kind, out, FaceTemplate::new((side, side)))
    }
}

/// A crop and the source rectangle it was resampled from.
#[derive(Clone, Debug)]
pub struct Crop {
    pub image: Array3<f64>,
    pub source: Rect,
}

/// Crops one frame. `face` is the aligned face for aligned kinds and the raw
/// frame otherwise; `landmarks` live in the same coordinates as `face`.
pub fn crop_roi(face: &Array3<f64>, landmarks: &Array2<f64>, spec: &RoISpec) -> Result<Crop, GeometryError> {
    spec.validate()?;
    let (h, w, _) = face.dim();
    let (hf, wf) = (h as f64, w as f64);
    let source = match &spec.kind {
        RoIKind::FaceAligned => Rect::new(0.0, 0.0, hf, wf),
        RoIKind::UpperFace => Rect::new(0.0, 0.0, (h / 2) as f64, wf),
        RoIKind::Cheeks { strip_height, strip_width } => {
            let cy = mean_landmark(landmarks, ibug68::CHEEK_ANCHORS)?[1];
            // centre in pixel-centre coordinates; rect edges are offset by 0.5
            Rect::new(cy + 0.5 - strip_height / 2.0, (wf - strip_width) / 2.0, *strip_height, *strip_width)
        }
        RoIKind::MouthCentered { side } => {
            let c = mouth_center(landmarks)?;
            Rect::new(c[1] + 0.5 - side / 2.0, c[0] + 0.5 - side / 2.0, *side, *side)
        }
        RoIKind::MouthFixedBox { rect } | RoIKind::FaceDirect { rect } => *rect,
    };
    if source.overlap_area(h, w) <= 0.0 {
        return Err(GeometryError::RegionOutOfFrame(source, h, w));
    }
    Ok(Crop { image: raster::sample_rect(face, source, spec.out_size), source })
}

/// A clip after smoothing, alignment and cropping.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub clip: VideoClip,
    /// Crop rectangle per frame, in the coordinates it was cut from.
    pub sources: Vec<Rect>,
    /// Alignment per frame (`None` for unaligned kinds).
    pub transforms: Vec<Option<SimilarityTransform>>,
}

/// smooth -> align -> crop, frame by frame. Metadata is carried over.
pub fn preprocess_clip(
    clip: &VideoClip,
    track: &LandmarkTrack,
    spec: &RoISpec,
    smoothing: Option<TemporalGaussian>,
) -> Result<Prepared, GeometryError> {
    spec.validate()?;
    let frames = clip.frames();
    if track.frame_count() != frames {
        return Err(GeometryError::TrackLength { frames, landmarks: track.frame_count() });
    }
    let track = match smoothing {
        Some(k) => smooth_landmarks(track, k),
        None => track.clone(),
    };
    let (oh, ow) = spec.out_size;
    let mut pixels = ndarray::Array4::zeros((frames, oh, ow, clip.channels()));
    let mut sources = Vec::with_capacity(frames);
    let mut transforms = Vec::with_capacity(frames);
    for t in 0..frames {
        let frame = clip.frame(t);
        let lm = track.frame(t);
        let crop = if spec.needs_alignment() {
            let a = align_face(&frame, &lm, &spec.template)?;
            transforms.push(Some(a.transform));
            crop_roi(&a.image, &a.landmarks, spec)?
        } else {
            transforms.push(None);
            crop_roi(&frame, &lm, spec)?
        };
        pixels.slice_mut(ndarray::s![t, .., .., ..]).assign(&crop.image);
        sources.push(crop.source);
    }
    let clip = VideoClip { pixels, meta: clip.meta.clone() };
    Ok(Prepared { clip, sources, transforms })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_fit() {
        let pts = [[1.0, 2.0], [5.0, -1.0], [3.0, 3.0]];
        let t = fit_similarity(&pts, &pts).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(t.rotation.abs() < 1e-12);
        assert!(t.translation[0].abs() < 1e-12 && t.translation[1].abs() < 1e-12);
    }

    #[test]
    fn recovers_rotation_and_shift() {
        let src = [[0.0, 0.0], [10.0, 0.0], [0.0, 5.0], [3.0, 7.0]];
        let truth = SimilarityTransform::new(1.0, 30f64.to_radians(), [5.0, -2.0]);
        let dst: Vec<Point> = src.iter().map(|p| truth.apply(*p)).collect();
        let t = fit_similarity(&src, &dst).unwrap();
        assert!((t.rotation - 30f64.to_radians()).abs() < 1e-9);
        assert!((t.translation[0] - 5.0).abs() < 1e-9 && (t.translation[1] + 2.0).abs() < 1e-9);
    }

    #[test]
    fn coincident_sources_are_degenerate() {
        let src = [[2.0, 2.0]; 4];
        let dst = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        assert!(matches!(fit_similarity(&src, &dst), Err(GeometryError::DegenerateConfiguration(_))));
    }

    #[test]
    fn inverse_and_compose() {
        let t = SimilarityTransform::new(1.7, 0.4, [3.0, -8.0]);
        let id = t.compose(&t.inverse());
        let p = id.apply([4.0, 9.0]);
        assert!((p[0] - 4.0).abs() < 1e-12 && (p[1] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn smoothing_keeps_constants_and_single_frames() {
        let k = TemporalGaussian::default();
        assert_eq!(k.smooth_sequence(&[2.5; 6]), vec![2.5; 6]);
        assert_eq!(k.smooth_sequence(&[7.0]), vec![7.0]);
    }

    #[test]
    fn impulse_response_is_renormalized_taps() {
        // direct discrete convolution oracle
        let k = TemporalGaussian { sigma: 1.0, radius: 1 };
        let mut x = vec![0.0; 9];
        x[5] = 1.0;
        let y = k.smooth_sequence(&x);
        let e = (-0.5f64).exp();
        let norm = 1.0 + 2.0 * e;
        let mut expected = vec![0.0; 9];
        expected[4] = e / norm;
        expected[5] = 1.0 / norm;
        expected[6] = e / norm;
        for (a, b) in y.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
        // truncated at the edge: frame 0 sees taps {1, e}
        let mut x = vec![0.0; 4];
        x[0] = 1.0;
        assert!((k.smooth_sequence(&x)[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
    }

    #[test]
    fn upper_face_takes_top_half_rows() {
        let face = Array3::from_shape_fn((112, 112, 1), |(r, _, _)| r as f64);
        let lm = Array2::zeros((68, 2));
        let spec = RoISpec::new(RoIKind::UpperFace, (112, 112), FaceTemplate::new((112, 112)));
        let crop = crop_roi(&face, &lm, &spec).unwrap();
        assert_eq!(crop.source, Rect::new(0.0, 0.0, 56.0, 112.0));
        assert_eq!(crop.image.dim(), (112, 112, 1));
    }

    #[test]
    fn crop_entirely_outside_is_rejected() {
        let face = Array3::zeros((20, 20, 1));
        let lm = Array2::zeros((68, 2));
        let spec = RoISpec::new(RoIKind::FaceDirect { rect: Rect::new(30.0, 0.0, 5.0, 5.0) }, (4, 4), FaceTemplate::new((20, 20)));
        assert!(matches!(crop_roi(&face, &lm, &spec), Err(GeometryError::RegionOutOfFrame(..))));
    }

    #[test]
    fn roi_spec_json_shape() {
        let spec = RoISpec::word_cheeks();
        let v = serde_json::to_value(&spec).unwrap();
        assert_eq!(v["kind"], "cheeks");
        assert_eq!(v["strip_height"], 40.0);
        let back: RoISpec = serde_json::from_value(v).unwrap();
        assert_eq!(back, spec);
    }
}
