//! Deterministic schematic talking faces.
//!
//! Faces are drawn in face units (`[0,1]^2` is the aligned face frame, see
//! [`FaceTemplate`](crate::geometry::FaceTemplate)) and placed on the canvas
//! by a per-clip similarity pose. Each class owns a motion curve
//! `m_c(u) = 0.5 + 0.5 a sin(2 pi f_c u + phi_c + delta)` over normalized
//! time `u`, with `f_c = 1 + floor(c / 4) / 2` and `phi_c = (c mod 4) pi / 2`.
//! The curve drives mouth opening, cheek brightness and brow raise in the
//! cue regions; every other region follows a random, class-independent curve.

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{write_frames, DataError, LandmarkTrack, Manifest, ManifestEntry, Split, VideoClip};
use crate::geometry::{ibug68, Point, Rect};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueRegion {
    Mouth,
    Cheeks,
    UpperFace,
}

/// Class-independent variation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Nuisance {
    pub max_yaw_deg: f64,
    pub max_roll_deg: f64,
    /// Face side as a fraction of the shorter canvas side, `[lo, hi]`.
    pub face_scale: [f64; 2],
    /// Max face-centre offset as a fraction of the shorter canvas side.
    pub max_shift: f64,
    /// Per-frame positional jitter, pixels (std).
    pub frame_jitter_px: f64,
    pub noise_std: f64,
    /// Per-clip phase offset of the class curve, radians (max magnitude).
    pub phase_jitter: f64,
    /// Per-region cue gain: mouth, cheeks, upper face.
    pub cue_gain: [f64; 3],
}

impl Default for Nuisance {
    fn default() -> Self {
        Self {
            max_yaw_deg: 60.0,
            max_roll_deg: 12.0,
            face_scale: [0.6, 0.7],
            max_shift: 0.05,
            frame_jitter_px: 0.3,
            noise_std: 0.02,
            phase_jitter: 0.3,
            cue_gain: [1.0, 1.0, 1.0],
        }
    }
}

/// Sentence mode: one word from each slot, in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceGrammar {
    pub slots: Vec<Vec<String>>,
    /// Frames spoken per word; the clip has `slots.len() * frames_per_word` frames.
    pub frames_per_word: usize,
}

impl SentenceGrammar {
    pub fn small() -> Self {
        let slot = |w: &[&str]| w.iter().map(|s| s.to_string()).collect();
        Self { slots: vec![slot(&["bin", "lay"]), slot(&["red", "blue"]), slot(&["one", "two"])], frames_per_word: 6 }
    }

    /// Six-slot command grammar: command, colour, preposition, letter,
    /// digit, adverb.
    pub fn grid() -> Self {
        let slot = |w: &str| w.split(' ').map(String::from).collect();
        let letters = ('a'..='z').filter(|c| *c != 'w').map(String::from).collect();
        Self {
            slots: vec![
                slot("bin lay place set"),
                slot("blue green red white"),
                slot("at by in with"),
                letters,
                slot("zero one two three four five six seven eight nine"),
                slot("again now please soon"),
            ],
            frames_per_word: 6,
        }
    }

    pub fn words(&self) -> Vec<&str> {
        self.slots.iter().flatten().map(String::as_str).collect()
    }

    /// One uniformly drawn sentence.
    pub fn sample(&self, rng: &mut impl Rng) -> String {
        self.slots.iter().map(|s| s[rng.gen_range(0..s.len())].as_str()).collect::<Vec<_>>().join(" ")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub clips_per_class: usize,
    pub cue_regions: Vec<CueRegion>,
    /// Cue in every listed region; otherwise only in the first.
    pub redundancy: bool,
    pub frames: usize,
    /// `(H, W)`.
    pub canvas: (usize, usize),
    pub seed: u64,
    #[serde(default)]
    pub nuisance: Nuisance,
    /// Sentence corpus instead of word classes; `num_classes` then counts
    /// sentences per split unit and `frames` is ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentences: Option<SentenceGrammar>,
}

impl SyntheticSpec {
    pub fn words(num_classes: usize, clips_per_class: usize, cue_regions: Vec<CueRegion>, seed: u64) -> Self {
        Self {
            num_classes,
            clips_per_class,
            cue_regions,
            redundancy: false,
            frames: 16,
            canvas: (64, 64),
            seed,
            nuisance: Nuisance::default(),
            sentences: None,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidSpec(m.into()));
        if self.cue_regions.is_empty() {
            return bad("cue_regions must be nonempty");
        }
        if self.clips_per_class == 0 {
            return bad("clips_per_class must be positive");
        }
        if self.canvas.0 < 16 || self.canvas.1 < 16 {
            return bad("canvas must be at least 16x16");
        }
        let n = &self.nuisance;
        if n.face_scale[0] <= 0.0 || n.face_scale[0] > n.face_scale[1] || n.face_scale[1] > 1.0 {
            return bad("face_scale must satisfy 0 < lo <= hi <= 1");
        }
        if n.noise_std < 0.0 || n.frame_jitter_px < 0.0 || n.max_yaw_deg.abs() >= 90.0 {
            return bad("nuisance magnitudes out of range");
        }
        match &self.sentences {
            None if self.num_classes == 0 || self.frames < 2 => bad("need num_classes >= 1 and frames >= 2"),
            Some(g) if g.slots.is_empty() || g.slots.iter().any(Vec::is_empty) || g.frames_per_word < 2 => {
                bad("grammar needs nonempty slots and frames_per_word >= 2")
            }
            Some(_) if self.num_classes == 0 => bad("num_classes must be positive"),
            _ => Ok(()),
        }
    }

    pub fn clip_frames(&self) -> usize {
        match &self.sentences {
            Some(g) => g.slots.len() * g.frames_per_word,
            None => self.frames,
        }
    }

    fn discriminative(&self, r: CueRegion) -> bool {
        if self.redundancy {
            self.cue_regions.contains(&r)
        } else {
            self.cue_regions.first() == Some(&r)
        }
    }

    /// Mouth bounding box `(x0, y0, x1, y1)` in face units, covering every
    /// opening and yaw the generator produces.
    pub fn mouth_box_units(&self) -> [f64; 4] {
        let dx = FEATURE_YAW_SHIFT * self.nuisance.max_yaw_deg.to_radians().sin().abs();
        let m = 0.02;
        [
            MOUTH_CENTER[0] - MOUTH_RX - dx - m,
            MOUTH_CENTER[1] - MOUTH_RY_MAX - m,
            MOUTH_CENTER[0] + MOUTH_RX + dx + m,
            MOUTH_CENTER[1] + MOUTH_RY_MAX + m,
        ]
    }
}

const FEATURE_YAW_SHIFT: f64 = 0.08;
const NOSE_YAW_SHIFT: f64 = 0.14;
const MOUTH_CENTER: Point = [0.5, 0.79];
const MOUTH_RX: f64 = 0.13;
const MOUTH_RY_MIN: f64 = 0.025;
const MOUTH_RY_MAX: f64 = 0.07;
const EYE_CENTERS: [Point; 2] = [[0.31, 0.38], [0.69, 0.38]];
const NOSE_TIP: Point = [0.5, 0.6];
const CHEEK_CENTERS: [Point; 2] = [[0.26, 0.62], [0.74, 0.62]];

/// Class motion curve.
pub fn class_curve(class: usize, u: f64, amplitude: f64, delta: f64) -> f64 {
    let f = 1.0 + (class / 4) as f64 * 0.5;
    let phi = (class % 4) as f64 * PI / 2.0;
    0.5 + 0.5 * amplitude * (TAU * f * u + phi + delta).sin()
}

/// Generated corpus held in memory; pixels are already 8-bit quantized so
/// they equal what [`load_clip`](super::load_clip) reads back.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub spec: SyntheticSpec,
    pub manifest: Manifest,
    pub clips: Vec<VideoClip>,
    pub landmarks: Vec<LandmarkTrack>,
    /// Sorted class labels (word mode) or grammar words (sentence mode).
    pub classes: Vec<String>,
    /// Canvas-space mouth box per clip and frame (covers every opening).
    pub mouth_boxes: Vec<Vec<Rect>>,
}

impl SyntheticCorpus {
    /// Writes `manifest.jsonl`, `spec.json` and `clips/<id>/` under `dir`;
    /// returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, DataError> {
        std::fs::create_dir_all(dir)?;
        for ((entry, clip), track) in self.manifest.entries.iter().zip(&self.clips).zip(&self.landmarks) {
            write_frames(&clip.pixels, &dir.join(&entry.frames_path))?;
            std::fs::write(dir.join(&entry.landmarks_path), track.to_json())?;
        }
        std::fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&self.spec).expect("spec serializes"))?;
        let path = dir.join("manifest.jsonl");
        self.manifest.write(&path)?;
        Ok(path)
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.clips.len()).filter(|&i| self.manifest.entries[i].split == split).collect()
    }

    pub fn class_of(&self, i: usize) -> usize {
        let label = self.manifest.entries[i].label.as_deref().unwrap_or("");
        self.classes.iter().position(|c| c == label).unwrap_or(0)
    }

    /// Clip `i` with its mouth box set to zero in every frame.
    pub fn occlude_mouth(&self, i: usize) -> VideoClip {
        let mut clip = self.clips[i].clone();
        let (_, h, w, _) = clip.pixels.dim();
        for (t, r) in self.mouth_boxes[i].iter().enumerate() {
            let y0 = r.y0.floor().max(0.0) as usize;
            let x0 = r.x0.floor().max(0.0) as usize;
            let y1 = ((r.y0 + r.h).ceil().max(0.0) as usize).min(h);
            let x1 = ((r.x0 + r.w).ceil().max(0.0) as usize).min(w);
            clip.pixels.slice_mut(ndarray::s![t, y0..y1, x0..x1, ..]).fill(0.0);
        }
        clip
    }
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-frame facial state.
#[derive(Clone, Copy, Debug)]
struct FaceState {
    mouth: f64,
    cheek: f64,
    brow: f64,
    yaw_sin: f64,
    skin: f64,
    background: f64,
}

/// Per-region motion source for one clip.
#[derive(Clone, Copy, Debug)]
enum Motion {
    Class { amplitude: f64, delta: f64 },
    Free { freq: f64, phase: f64, amplitude: f64 },
}

impl Motion {
    fn sample(rng: &mut ChaCha8Rng, discriminative: bool, phase_jitter: f64) -> Self {
        let amplitude = rng.gen_range(0.8..1.0);
        if discriminative {
            Motion::Class { amplitude, delta: rng.gen_range(-phase_jitter..=phase_jitter) }
        } else {
            Motion::Free { freq: rng.gen_range(0.5..2.5), phase: rng.gen_range(0.0..TAU), amplitude }
        }
    }

    /// Value in `[0, 1]` for word `class` at local time `u`.
    fn at(&self, class: usize, u: f64) -> f64 {
        match *self {
            Motion::Class { amplitude, delta } => class_curve(class, u, amplitude, delta),
            Motion::Free { freq, phase, amplitude } => 0.5 + 0.5 * amplitude * (TAU * freq * u + phase).sin(),
        }
    }
}

fn coverage(d: f64, soft: f64) -> f64 {
    (0.5 - d / soft).clamp(0.0, 1.0)
}

fn ellipse_dist(p: Point, c: Point, rx: f64, ry: f64) -> f64 {
    let q = (((p[0] - c[0]) / rx).powi(2) + ((p[1] - c[1]) / ry).powi(2)).sqrt();
    (q - 1.0) * rx.min(ry)
}

fn segment_dist(p: Point, a: Point, b: Point) -> f64 {
    let (vx, vy) = (b[0] - a[0], b[1] - a[1]);
    let t = (((p[0] - a[0]) * vx + (p[1] - a[1]) * vy) / (vx * vx + vy * vy)).clamp(0.0, 1.0);
    ((p[0] - a[0] - t * vx).powi(2) + (p[1] - a[1] - t * vy).powi(2)).sqrt()
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

struct Layout {
    face_c: Point,
    face_r: [f64; 2],
    brows: [[Point; 2]; 2],
    eyes: [Point; 2],
    nose: [Point; 2],
    cheeks: [Point; 2],
    mouth: Point,
    mouth_ry: f64,
    inner_ry: f64,
}

fn layout(st: &FaceState) -> Layout {
    let dx = FEATURE_YAW_SHIFT * st.yaw_sin;
    let by = 0.27 - 0.06 * st.brow;
    Layout {
        face_c: [0.5 + 0.03 * st.yaw_sin, 0.52],
        face_r: [0.40 * (1.0 - 0.1 * st.yaw_sin.abs()), 0.48],
        brows: [[[0.19 + dx, by + 0.01], [0.42 + dx, by - 0.01]], [[0.58 + dx, by - 0.01], [0.81 + dx, by + 0.01]]],
        eyes: [[EYE_CENTERS[0][0] + dx, EYE_CENTERS[0][1]], [EYE_CENTERS[1][0] + dx, EYE_CENTERS[1][1]]],
        nose: [[0.5 + dx, 0.42], [NOSE_TIP[0] + NOSE_YAW_SHIFT * st.yaw_sin, NOSE_TIP[1]]],
        cheeks: [[CHEEK_CENTERS[0][0] + dx, CHEEK_CENTERS[0][1]], [CHEEK_CENTERS[1][0] + dx, CHEEK_CENTERS[1][1]]],
        mouth: [MOUTH_CENTER[0] + dx, MOUTH_CENTER[1]],
        mouth_ry: MOUTH_RY_MIN + (MOUTH_RY_MAX - MOUTH_RY_MIN) * st.mouth,
        inner_ry: 0.05 * st.mouth,
    }
}

/// Intensity at face-unit point `p`; `soft` is the edge width in face units.
fn shade(p: Point, st: &FaceState, lay: &Layout, soft: f64) -> f64 {
    let mut v = st.background;
    v = lerp(v, st.skin, coverage(ellipse_dist(p, lay.face_c, lay.face_r[0], lay.face_r[1]), soft));
    let cheek = (st.skin * (0.7 + 0.6 * st.cheek)).min(1.0);
    for c in lay.cheeks {
        v = lerp(v, cheek, coverage(ellipse_dist(p, c, 0.08, 0.05), soft));
    }
    for [a, b] in lay.brows {
        v = lerp(v, 0.15, coverage(segment_dist(p, a, b) - 0.018, soft));
    }
    for e in lay.eyes {
        v = lerp(v, 0.08, coverage(ellipse_dist(p, e, 0.06, 0.025), soft));
    }
    v = lerp(v, st.skin * 0.6, coverage(segment_dist(p, lay.nose[0], lay.nose[1]) - 0.01, soft));
    v = lerp(v, 0.3, coverage(ellipse_dist(p, lay.mouth, MOUTH_RX, lay.mouth_ry), soft));
    if lay.inner_ry > 1e-3 {
        v = lerp(v, 0.05, coverage(ellipse_dist(p, lay.mouth, 0.095, lay.inner_ry), soft));
    }
    v
}

fn ellipse_points(c: Point, rx: f64, ry: f64, n: usize, start: f64) -> Vec<Point> {
    (0..n)
        .map(|k| {
            let a = start + TAU * k as f64 / n as f64;
            [c[0] + rx * a.cos(), c[1] + ry * a.sin()]
        })
        .collect()
}

/// ibug-68 landmarks in face units.
fn landmarks_units(lay: &Layout) -> Vec<Point> {
    let mut pts = Vec::with_capacity(ibug68::COUNT);
    // jaw 1..17: lower half of the face outline, image-left to image-right
    for k in 0..17 {
        let a = PI - PI * k as f64 / 16.0;
        pts.push([lay.face_c[0] + lay.face_r[0] * a.cos(), lay.face_c[1] + lay.face_r[1] * a.sin()]);
    }
    // brows 18..27
    for [a, b] in lay.brows {
        for k in 0..5 {
            let t = k as f64 / 4.0;
            pts.push([lerp(a[0], b[0], t), lerp(a[1], b[1], t)]);
        }
    }
    // nose bridge 28..31 ends at the tip
    for k in 0..4 {
        let t = k as f64 / 3.0;
        pts.push([lerp(lay.nose[0][0], lay.nose[1][0], t), lerp(lay.nose[0][1], lay.nose[1][1], t)]);
    }
    // nostrils 32..36
    for k in 0..5 {
        pts.push([lay.nose[1][0] - 0.06 + 0.03 * k as f64, lay.nose[1][1] + 0.02]);
    }
    // eyes 37..48, corner first, upper lid then lower lid
    for e in lay.eyes {
        pts.extend(ellipse_points(e, 0.06, 0.025, 6, PI));
    }
    // outer lip 49..60: left corner, upper lip to the right corner, lower lip back
    pts.extend(ellipse_points(lay.mouth, MOUTH_RX, lay.mouth_ry, 12, PI));
    pts.extend(ellipse_points(lay.mouth, 0.095, lay.inner_ry, 8, PI));
    pts
}

struct Pose {
    scale: f64,
    roll: f64,
    center: Point,
}

impl Pose {
    fn to_canvas(&self, u: Point) -> Point {
        let (s, c) = self.roll.sin_cos();
        let (x, y) = ((u[0] - 0.5) * self.scale, (u[1] - 0.5) * self.scale);
        [self.center[0] + c * x - s * y, self.center[1] + s * x + c * y]
    }

    fn to_units(&self, p: Point) -> Point {
        let (s, c) = self.roll.sin_cos();
        let (x, y) = (p[0] - self.center[0], p[1] - self.center[1]);
        [0.5 + (c * x + s * y) / self.scale, 0.5 + (-s * x + c * y) / self.scale]
    }
}

struct Rendered {
    pixels: Array4<f64>,
    landmarks: LandmarkTrack,
    mouth_boxes: Vec<Rect>,
    yaw_deg: f64,
}

/// Renders one clip. `words` lists the class index spoken in each segment.
fn render_clip(spec: &SyntheticSpec, words: &[usize], frames: usize, rng: &mut ChaCha8Rng) -> Rendered {
    let n = &spec.nuisance;
    let (h, w) = spec.canvas;
    let side = h.min(w) as f64;
    let yaw_deg = rng.gen_range(-n.max_yaw_deg..=n.max_yaw_deg);
    let roll = rng.gen_range(-n.max_roll_deg..=n.max_roll_deg).to_radians();
    let scale = rng.gen_range(n.face_scale[0]..=n.face_scale[1]) * side;
    let shift = n.max_shift * side;
    let base = [
        (w as f64 - 1.0) / 2.0 + rng.gen_range(-shift..=shift),
        (h as f64 - 1.0) / 2.0 + rng.gen_range(-shift..=shift),
    ];
    let skin = rng.gen_range(0.5..0.7);
    let background = rng.gen_range(0.05..0.25);
    let mut motions = [CueRegion::Mouth, CueRegion::Cheeks, CueRegion::UpperFace]
        .map(|r| Motion::sample(rng, spec.discriminative(r), n.phase_jitter));
    for (m, g) in motions.iter_mut().zip(n.cue_gain) {
        if let Motion::Class { amplitude, .. } = m {
            *amplitude *= g;
        }
    }
    let jitter = Normal::new(0.0, n.frame_jitter_px.max(1e-12)).expect("finite std");
    let noise = Normal::new(0.0, n.noise_std.max(1e-12)).expect("finite std");
    let per_word = frames / words.len();

    let mut pixels = Array4::zeros((frames, h, w, 1));
    let mut points = Array3::zeros((frames, ibug68::COUNT, 2));
    let mut boxes = Vec::with_capacity(frames);
    for t in 0..frames {
        let seg = (t / per_word).min(words.len() - 1);
        let local = (t - seg * per_word) as f64 / (per_word - 1).max(1) as f64;
        // class curves use segment-local time; free curves run over the clip
        let global = t as f64 / (frames - 1).max(1) as f64;
        let value = |m: &Motion| match m {
            Motion::Class { .. } => m.at(words[seg], local),
            Motion::Free { .. } => m.at(0, global),
        };
        let st = FaceState {
            mouth: value(&motions[0]),
            cheek: value(&motions[1]),
            brow: value(&motions[2]),
            yaw_sin: yaw_deg.to_radians().sin(),
            skin,
            background,
        };
        let pose = Pose {
            scale,
            roll,
            center: [base[0] + jitter.sample(rng), base[1] + jitter.sample(rng)],
        };
        let lay = layout(&st);
        let soft = 1.0 / scale;
        for r in 0..h {
            for c in 0..w {
                let u = pose.to_units([c as f64, r as f64]);
                let v = shade(u, &st, &lay, soft) + noise.sample(rng);
                pixels[[t, r, c, 0]] = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
            }
        }
        for (j, p) in landmarks_units(&lay).into_iter().enumerate() {
            let q = pose.to_canvas(p);
            points[[t, j, 0]] = q[0];
            points[[t, j, 1]] = q[1];
        }
        let mc = pose.to_canvas(lay.mouth);
        let half = scale * MOUTH_RX + 2.0;
        boxes.push(Rect::new(mc[1] + 0.5 - half, mc[0] + 0.5 - half, 2.0 * half, 2.0 * half));
    }
    let landmarks = LandmarkTrack { scheme: LandmarkTrack::DEFAULT_SCHEME.into(), points, confidence: vec![1.0; frames] };
    Rendered { pixels, landmarks, mouth_boxes: boxes, yaw_deg }
}

fn split_of(i: usize, n: usize) -> Split {
    let train = (0.7 * n as f64).round() as usize;
    let val = (0.1 * n as f64).round() as usize;
    if i < train {
        Split::Train
    } else if i < train + val {
        Split::Val
    } else {
        Split::Test
    }
}

/// Renders the corpus described by `spec`. Identical specs give identical
/// corpora.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus, DataError> {
    spec.validate()?;
    let frames = spec.clip_frames();
    let mut entries = Vec::new();
    let mut clips = Vec::new();
    let mut landmarks = Vec::new();
    let mut mouth_boxes = Vec::new();
    let classes: Vec<String> = match &spec.sentences {
        None => (0..spec.num_classes).map(|c| format!("word{c:02}")).collect(),
        Some(g) => g.words().into_iter().map(String::from).collect(),
    };
    let mut push = |id: String, words: Vec<usize>, label: Option<String>, transcript: Option<String>, split, idx: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, idx));
        let r = render_clip(spec, &words, frames, &mut rng);
        let entry = ManifestEntry {
            clip_id: id.clone(),
            frames_path: format!("clips/{id}"),
            landmarks_path: format!("clips/{id}/landmarks.json"),
            label,
            transcript,
            split,
            yaw_deg: Some(r.yaw_deg),
            duration_frames: frames,
        };
        clips.push(VideoClip::with_meta(r.pixels, entry.clone()));
        entries.push(entry);
        landmarks.push(r.landmarks);
        mouth_boxes.push(r.mouth_boxes);
    };
    match &spec.sentences {
        None => {
            for c in 0..spec.num_classes {
                for i in 0..spec.clips_per_class {
                    let idx = (c * spec.clips_per_class + i) as u64;
                    push(format!("c{c:02}_{i:03}"), vec![c], Some(classes[c].clone()), None, split_of(i, spec.clips_per_class), idx);
                }
            }
        }
        Some(g) => {
            // word indices are global over the slots, in slot order
            let offsets: Vec<usize> = g.slots.iter().scan(0, |acc, s| {
                let o = *acc;
                *acc += s.len();
                Some(o)
            }).collect();
            let total = spec.num_classes * spec.clips_per_class;
            let mut pick = ChaCha8Rng::seed_from_u64(mix(spec.seed, u64::MAX));
            for i in 0..total {
                let choice: Vec<usize> = g.slots.iter().map(|s| pick.gen_range(0..s.len())).collect();
                let words: Vec<usize> = choice.iter().zip(&offsets).map(|(k, o)| k + o).collect();
                let text = choice.iter().zip(&g.slots).map(|(k, s)| s[*k].as_str()).collect::<Vec<_>>().join(" ");
                push(format!("s{i:04}"), words, None, Some(text), split_of(i % spec.clips_per_class, spec.clips_per_class), i as u64);
            }
        }
    }
    Ok(SyntheticCorpus {
        spec: spec.clone(),
        manifest: Manifest::new(entries, PathBuf::new()),
        clips,
        landmarks,
        classes,
        mouth_boxes,
    })
}
