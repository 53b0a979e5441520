//! Preprocessed clip shards: `<dir>/shards/<clip_id>.safetensors` holding a
//! `(T, H, W, C)` f64 `pixels` tensor, a `<clip_id>.json` sidecar with the
//! crop geometry, `manifest.jsonl` and a `prepare.json` summary written last.

use std::path::{Path, PathBuf};

use safetensors::{tensor::TensorView, Dtype, SafeTensors};
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::data::{load_clip, load_manifest, Manifest, ManifestEntry, VideoClip};
use crate::geometry::{preprocess_clip, Rect, RoISpec, SimilarityTransform, TemporalGaussian};
use crate::models::config_digest;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardSidecar {
    pub clip_id: String,
    pub prep_hash: String,
    pub roi: RoISpec,
    /// `(H, W)` of the source region before resizing, frame 0.
    pub pre_resize: (f64, f64),
    pub out_size: (usize, usize),
    pub sources: Vec<Rect>,
    pub transforms: Vec<Option<SimilarityTransform>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipFailure {
    pub clip_id: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub prep_hash: String,
    pub source_manifest: PathBuf,
    pub roi: RoISpec,
    pub smoothing: Option<TemporalGaussian>,
    pub prepared: usize,
    pub failures: Vec<ClipFailure>,
}

/// Identity of a preparation: source manifest, RoI and smoothing.
pub fn prep_hash(manifest: &Path, roi: &RoISpec, smoothing: Option<TemporalGaussian>) -> String {
    config_digest(&(manifest, roi, smoothing))
}

fn summary_path(dir: &Path) -> PathBuf {
    dir.join("prepare.json")
}

/// Crops every clip of `manifest_path` into `out`. Clips that fail are
/// listed in the summary and skipped.
pub fn prepare_shards(
    manifest_path: &Path,
    roi: &RoISpec,
    smoothing: Option<TemporalGaussian>,
    out: &Path,
) -> Result<PrepareSummary, CliError> {
    roi.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let manifest = read_manifest(manifest_path)?;
    let hash = prep_hash(manifest_path, roi, smoothing);
    let shard_dir = out.join("shards");
    std::fs::create_dir_all(&shard_dir).map_err(|e| CliError::io(&shard_dir, e))?;
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for entry in &manifest.entries {
        match prepare_one(&manifest, entry, roi, smoothing, &hash, &shard_dir) {
            Ok(e) => entries.push(e),
            Err(error) => {
                log::warn!("{}: {error}", entry.clip_id);
                failures.push(ClipFailure { clip_id: entry.clip_id.clone(), error });
            }
        }
    }
    Manifest::new(entries, out).write(&out.join("manifest.jsonl")).map_err(|e| CliError::Data(e.to_string()))?;
    let summary = PrepareSummary {
        prep_hash: hash,
        source_manifest: manifest_path.to_path_buf(),
        roi: roi.clone(),
        smoothing,
        prepared: manifest.entries.len() - failures.len(),
        failures,
    };
    write_json(&summary_path(out), &summary)?;
    Ok(summary)
}

fn prepare_one(
    manifest: &Manifest,
    entry: &ManifestEntry,
    roi: &RoISpec,
    smoothing: Option<TemporalGaussian>,
    hash: &str,
    shard_dir: &Path,
) -> Result<ManifestEntry, String> {
    let (clip, track) = load_clip(manifest, entry).map_err(|e| e.to_string())?;
    let prepared = preprocess_clip(&clip, &track, roi, smoothing).map_err(|e| e.to_string())?;
    let id = &entry.clip_id;
    let sidecar = ShardSidecar {
        clip_id: id.clone(),
        prep_hash: hash.to_string(),
        roi: roi.clone(),
        pre_resize: prepared.sources.first().map_or((0.0, 0.0), |r| (r.h, r.w)),
        out_size: roi.out_size,
        sources: prepared.sources,
        transforms: prepared.transforms,
    };
    let tensor = shard_dir.join(format!("{id}.safetensors"));
    write_pixels(&tensor, &prepared.clip.pixels)?;
    write_json(&shard_dir.join(format!("{id}.json")), &sidecar).map_err(|e| e.to_string())?;
    Ok(ManifestEntry {
        frames_path: format!("shards/{id}.safetensors"),
        landmarks_path: format!("shards/{id}.json"),
        ..entry.clone()
    })
}

fn write_pixels(path: &Path, pixels: &ndarray::Array4<f64>) -> Result<(), String> {
    let bytes: Vec<u8> = pixels.iter().flat_map(|v| v.to_le_bytes()).collect();
    let view = TensorView::new(Dtype::F64, pixels.shape().to_vec(), &bytes).map_err(|e| e.to_string())?;
    let data = safetensors::serialize([("pixels", view)], &None).map_err(|e| e.to_string())?;
    std::fs::write(path, data).map_err(|e| e.to_string())
}

fn read_pixels(path: &Path) -> Result<ndarray::Array4<f64>, CliError> {
    let data = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let bad = |m: String| CliError::Data(format!("{}: {m}", path.display()));
    let st = SafeTensors::deserialize(&data).map_err(|e| bad(e.to_string()))?;
    let view = st.tensor("pixels").map_err(|e| bad(e.to_string()))?;
    let shape: [usize; 4] = view.shape().try_into().map_err(|_| bad("pixels must be 4-d".into()))?;
    if view.dtype() != Dtype::F64 {
        return Err(bad(format!("expected f64 pixels, found {:?}", view.dtype())));
    }
    let values = view.data().chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    ndarray::Array4::from_shape_vec(shape, values).map_err(|e| bad(e.to_string()))
}

pub(crate) fn read_manifest(path: &Path) -> Result<Manifest, CliError> {
    load_manifest(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value).expect("serializable")).map_err(|e| CliError::io(path, e))
}

/// Prepared clips of a shard directory, in manifest order.
pub fn load_shards(dir: &Path) -> Result<Vec<VideoClip>, CliError> {
    let manifest = read_manifest(&dir.join("manifest.jsonl"))?;
    manifest
        .entries
        .iter()
        .map(|e| Ok(VideoClip::with_meta(read_pixels(&manifest.resolve(&e.frames_path))?, e.clone())))
        .collect()
}

/// Shard directory for a run: the configured one, or a cache entry keyed by
/// the preparation hash, prepared on first use.
pub fn ensure_shards(
    manifest: &Path,
    roi: &RoISpec,
    smoothing: Option<TemporalGaussian>,
    shards: Option<&Path>,
) -> Result<PathBuf, CliError> {
    if let Some(dir) = shards {
        return Ok(dir.to_path_buf());
    }
    let root = cache_root();
    let dir = root.join(prep_hash(manifest, roi, smoothing));
    let complete = std::fs::read_to_string(summary_path(&dir))
        .ok()
        .and_then(|s| serde_json::from_str::<PrepareSummary>(&s).ok())
        .is_some_and(|s| s.failures.is_empty());
    if !complete {
        let summary = prepare_shards(manifest, roi, smoothing, &dir)?;
        if !summary.failures.is_empty() {
            return Err(CliError::PartialFailure { failed: summary.failures.len(), total: summary.prepared + summary.failures.len() });
        }
    }
    Ok(dir)
}

/// `FACEVSR_CACHE`, or `facevsr-cache` under the system temp directory.
pub fn cache_root() -> PathBuf {
    std::env::var_os("FACEVSR_CACHE").map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("facevsr-cache"))
}
