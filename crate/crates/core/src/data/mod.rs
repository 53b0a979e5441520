//! Manifests, clip and landmark ingestion, and the synthetic face corpus.

pub mod synthetic;

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, Array4, Array5, Axis};
use serde::{Deserialize, Serialize};

pub use synthetic::{generate_synthetic, CueRegion, Nuisance, SentenceGrammar, SyntheticCorpus, SyntheticSpec};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("line {line}: malformed manifest entry: {reason}")]
    MalformedEntry { line: usize, reason: String },
    #[error("line {line}: duplicate clip_id {clip_id:?}")]
    DuplicateClipId { line: usize, clip_id: String },
    #[error("line {line}: entry needs exactly one of label / transcript ({reason})")]
    MissingLabelAndTranscript { line: usize, reason: String },
    #[error("clip {clip_id}: {frames} frames but {landmarks} landmark rows (manifest says {declared})")]
    FrameCountMismatch { clip_id: String, frames: usize, landmarks: usize, declared: usize },
    #[error("unreadable frame {path}: {reason}")]
    UnreadableFrame { path: PathBuf, reason: String },
    #[error("invalid landmark file {path}: {reason}")]
    InvalidLandmarks { path: PathBuf, reason: String },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split {s:?}")),
        }
    }
}

/// One manifest line. Paths are relative to the manifest's directory unless
/// absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub frames_path: String,
    pub landmarks_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaw_deg: Option<f64>,
    pub duration_frames: usize,
}

impl ManifestEntry {
    /// The label or transcript, whichever is present.
    pub fn target(&self) -> &str {
        self.label.as_deref().or(self.transcript.as_deref()).unwrap_or("")
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths resolve against.
    pub root: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>, root: impl Into<PathBuf>) -> Self {
        Self { entries, root: root.into() }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Sorted distinct labels; a label's class index is its position here.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut v: Vec<String> = self.entries.iter().filter_map(|e| e.label.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("manifest entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_jsonl().as_bytes())?;
        f.flush()?;
        Ok(())
    }

    /// Parses JSON Lines; blank lines are skipped.
    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self, DataError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry =
                serde_json::from_str(line).map_err(|e| DataError::MalformedEntry { line: n, reason: e.to_string() })?;
            validate_entry(&entry, n)?;
            if !seen.insert(entry.clip_id.clone()) {
                return Err(DataError::DuplicateClipId { line: n, clip_id: entry.clip_id });
            }
            entries.push(entry);
        }
        Ok(Self { entries, root: root.into() })
    }
}

fn validate_entry(e: &ManifestEntry, line: usize) -> Result<(), DataError> {
    match (&e.label, &e.transcript) {
        (Some(_), Some(_)) => {
            return Err(DataError::MissingLabelAndTranscript { line, reason: "both present".into() });
        }
        (None, None) => return Err(DataError::MissingLabelAndTranscript { line, reason: "neither present".into() }),
        _ => {}
    }
    let malformed = |reason: &str| Err(DataError::MalformedEntry { line, reason: reason.into() });
    if e.clip_id.is_empty() {
        return malformed("empty clip_id");
    }
    if e.duration_frames == 0 {
        return malformed("duration_frames must be positive");
    }
    if let Some(y) = e.yaw_deg {
        if !y.is_finite() {
            return malformed("yaw_deg must be finite");
        }
    }
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<Manifest, DataError> {
    let file = std::fs::File::open(path)?;
    let mut text = String::new();
    for line in std::io::BufReader::new(file).lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Manifest::parse(&text, root)
}

/// Per-frame landmark coordinates for one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkTrack {
    pub scheme: String,
    /// `(T, L, 2)` pixel coordinates, `x` then `y`.
    pub points: Array3<f64>,
    pub confidence: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LandmarkFile {
    scheme: String,
    points: Vec<Vec<[f64; 2]>>,
    confidence: Vec<f64>,
}

impl LandmarkTrack {
    pub const DEFAULT_SCHEME: &'static str = "ibug68";

    pub fn frame_count(&self) -> usize {
        self.points.dim().0
    }

    pub fn num_points(&self) -> usize {
        self.points.dim().1
    }

    /// `(L, 2)` points of frame `t`.
    pub fn frame(&self, t: usize) -> Array2<f64> {
        self.points.index_axis(Axis(0), t).to_owned()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.points.iter().any(|v| !v.is_finite()) {
            return Err("non-finite coordinate".into());
        }
        if self.confidence.len() != self.frame_count() {
            return Err(format!("{} confidences for {} frames", self.confidence.len(), self.frame_count()));
        }
        if self.confidence.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err("confidence outside [0, 1]".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let (t, l, _) = self.points.dim();
        let file = LandmarkFile {
            scheme: self.scheme.clone(),
            points: (0..t).map(|i| (0..l).map(|j| [self.points[[i, j, 0]], self.points[[i, j, 1]]]).collect()).collect(),
            confidence: self.confidence.clone(),
        };
        serde_json::to_string(&file).expect("landmarks serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let file: LandmarkFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let t = file.points.len();
        let l = file.points.first().map_or(0, Vec::len);
        if file.points.iter().any(|f| f.len() != l) {
            return Err("landmark count varies across frames".into());
        }
        let flat: Vec<f64> = file.points.iter().flatten().flat_map(|p| *p).collect();
        let points = Array3::from_shape_vec((t, l, 2), flat).map_err(|e| e.to_string())?;
        let track = Self { scheme: file.scheme, points, confidence: file.confidence };
        track.validate()?;
        Ok(track)
    }
}

/// `(T, H, W, C)` pixels in `[0, 1]` and the manifest entry they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    pub pixels: Array4<f64>,
    pub meta: Option<ManifestEntry>,
}

impl VideoClip {
    pub fn new(pixels: Array4<f64>) -> Self {
        Self { pixels, meta: None }
    }

    pub fn with_meta(pixels: Array4<f64>, meta: ManifestEntry) -> Self {
        Self { pixels, meta: Some(meta) }
    }

    pub fn frames(&self) -> usize {
        self.pixels.dim().0
    }

    /// `(H, W)`.
    pub fn frame_size(&self) -> (usize, usize) {
        let (_, h, w, _) = self.pixels.dim();
        (h, w)
    }

    pub fn channels(&self) -> usize {
        self.pixels.dim().3
    }

    pub fn frame(&self, t: usize) -> Array3<f64> {
        self.pixels.index_axis(Axis(0), t).to_owned()
    }

    /// Luma average for colour clips; grayscale clips are returned as is.
    pub fn to_grayscale(&self) -> Self {
        if self.channels() == 1 {
            return self.clone();
        }
        let w = [0.299, 0.587, 0.114];
        let (t, h, wd, _) = self.pixels.dim();
        let px = Array4::from_shape_fn((t, h, wd, 1), |(a, b, c, _)| {
            (0..3).map(|k| w[k] * self.pixels[[a, b, c, k]]).sum::<f64>().clamp(0.0, 1.0)
        });
        Self { pixels: px, meta: self.meta.clone() }
    }
}

/// Stacks equally shaped clips into a `(B, C, T, H, W)` network batch.
pub fn clips_to_batch(clips: &[&VideoClip]) -> Option<Array5<f64>> {
    let first = clips.first()?.pixels.dim();
    if clips.iter().any(|c| c.pixels.dim() != first) {
        return None;
    }
    let (t, h, w, ch) = first;
    Some(Array5::from_shape_fn((clips.len(), ch, t, h, w), |(b, k, i, y, x)| clips[b].pixels[[i, y, x, k]]))
}

fn read_frame(path: &Path) -> Result<Array3<f64>, DataError> {
    let unreadable = |reason: String| DataError::UnreadableFrame { path: path.to_path_buf(), reason };
    let img = image::open(path).map_err(|e| unreadable(e.to_string()))?;
    use image::DynamicImage as D;
    let out = match img {
        D::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            Array3::from_shape_fn((h as usize, w as usize, 1), |(r, c, _)| g.get_pixel(c as u32, r as u32).0[0] as f64 / 255.0)
        }
        D::ImageLuma16(g) => {
            let (w, h) = g.dimensions();
            Array3::from_shape_fn((h as usize, w as usize, 1), |(r, c, _)| g.get_pixel(c as u32, r as u32).0[0] as f64 / 65535.0)
        }
        D::ImageRgb16(_) | D::ImageRgba16(_) => {
            let rgb = img.to_rgb16();
            let (w, h) = rgb.dimensions();
            Array3::from_shape_fn((h as usize, w as usize, 3), |(r, c, k)| rgb.get_pixel(c as u32, r as u32).0[k] as f64 / 65535.0)
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = rgb.dimensions();
            Array3::from_shape_fn((h as usize, w as usize, 3), |(r, c, k)| rgb.get_pixel(c as u32, r as u32).0[k] as f64 / 255.0)
        }
    };
    Ok(out)
}

/// Sorted `*.png` files of a frame directory.
pub fn frame_files(dir: &Path) -> Result<Vec<PathBuf>, DataError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_clip(manifest: &Manifest, entry: &ManifestEntry) -> Result<(VideoClip, LandmarkTrack), DataError> {
    let lm_path = manifest.resolve(&entry.landmarks_path);
    let track = LandmarkTrack::from_json(&std::fs::read_to_string(&lm_path)?)
        .map_err(|reason| DataError::InvalidLandmarks { path: lm_path.clone(), reason })?;
    let files = frame_files(&manifest.resolve(&entry.frames_path))?;
    let mismatch = |frames| DataError::FrameCountMismatch {
        clip_id: entry.clip_id.clone(),
        frames,
        landmarks: track.frame_count(),
        declared: entry.duration_frames,
    };
    if files.len() != track.frame_count() || files.len() != entry.duration_frames || files.is_empty() {
        return Err(mismatch(files.len()));
    }
    let frames = files.iter().map(|p| read_frame(p)).collect::<Result<Vec<_>, _>>()?;
    let dim = frames[0].dim();
    if let Some((i, _)) = frames.iter().enumerate().find(|(_, f)| f.dim() != dim) {
        return Err(DataError::UnreadableFrame { path: files[i].clone(), reason: format!("size differs from frame 0 {dim:?}") });
    }
    let views: Vec<_> = frames.iter().map(|f| f.view()).collect();
    let pixels = ndarray::stack(Axis(0), &views).expect("equal frame shapes");
    Ok((VideoClip::with_meta(pixels, entry.clone()), track))
}

/// Writes frames as 8-bit PNGs (`000.png`, `001.png`, ...) into `dir`.
pub fn write_frames(pixels: &Array4<f64>, dir: &Path) -> Result<(), DataError> {
    std::fs::create_dir_all(dir)?;
    let (t, h, w, c) = pixels.dim();
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    for i in 0..t {
        let path = dir.join(format!("{i:03}.png"));
        let err = |e: image::ImageError| DataError::UnreadableFrame { path: path.clone(), reason: e.to_string() };
        if c == 1 {
            let img = image::GrayImage::from_fn(w as u32, h as u32, |x, y| image::Luma([q(pixels[[i, y as usize, x as usize, 0]])]));
            img.save(&path).map_err(err)?;
        } else {
            let img = image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
                image::Rgb([0, 1, 2].map(|k| q(pixels[[i, y as usize, x as usize, k.min(c - 1)]])))
            });
            img.save(&path).map_err(err)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str) -> ManifestEntry {
        ManifestEntry {
            clip_id: id.into(),
            frames_path: format!("clips/{id}"),
            landmarks_path: format!("clips/{id}/landmarks.json"),
            label: Some("about".into()),
            transcript: None,
            split: Split::Train,
            yaw_deg: Some(12.5),
            duration_frames: 29,
        }
    }

    #[test]
    fn parses_three_lines() {
        let m = Manifest { entries: vec![entry("a"), entry("b"), entry("c")], root: PathBuf::new() };
        let back = Manifest::parse(&m.to_jsonl(), "").unwrap();
        assert_eq!(back.entries.len(), 3);
        assert_eq!(back, m);
    }

    #[test]
    fn label_and_transcript_are_exclusive() {
        let mut e = entry("a");
        e.transcript = Some("bin blue".into());
        let text = serde_json::to_string(&e).unwrap();
        assert!(matches!(Manifest::parse(&text, ""), Err(DataError::MissingLabelAndTranscript { line: 1, .. })));
        e.label = None;
        e.transcript = None;
        let text = format!("{}\n{}", serde_json::to_string(&entry("x")).unwrap(), serde_json::to_string(&e).unwrap());
        assert!(matches!(Manifest::parse(&text, ""), Err(DataError::MissingLabelAndTranscript { line: 2, .. })));
    }

    #[test]
    fn duplicate_ids_and_bad_lines_are_reported() {
        let a = serde_json::to_string(&entry("a")).unwrap();
        let text = format!("{a}\n{a}");
        assert!(matches!(Manifest::parse(&text, ""), Err(DataError::DuplicateClipId { line: 2, .. })));
        let text = format!("{a}\n\n{{\"clip_id\": 3}}");
        assert!(matches!(Manifest::parse(&text, ""), Err(DataError::MalformedEntry { line: 3, .. })));
        let text = r#"{"clip_id":"q","frames_path":"f","landmarks_path":"l","label":"x","split":"dev","duration_frames":3}"#;
        assert!(matches!(Manifest::parse(text, ""), Err(DataError::MalformedEntry { line: 1, .. })));
    }

    #[test]
    fn landmark_json_round_trip() {
        let track = LandmarkTrack {
            scheme: "ibug68".into(),
            points: Array3::from_shape_fn((2, 3, 2), |(a, b, c)| (a * 6 + b * 2 + c) as f64 + 0.25),
            confidence: vec![0.9, 1.0],
        };
        let back = LandmarkTrack::from_json(&track.to_json()).unwrap();
        assert_eq!(back, track);
        assert!(LandmarkTrack::from_json(r#"{"scheme":"x","points":[[[0,0]],[[0,0],[1,1]]],"confidence":[1,1]}"#).is_err());
    }
}
