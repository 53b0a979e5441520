use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelError, Network, FRONTEND_PREFIX};

/// JSON sidecar stored next to the parameter archive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub frontend_config_hash: String,
    pub stage: String,
    pub epoch: usize,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    /// Digest of the frontend parameter bytes.
    #[serde(default)]
    pub frontend_param_hash: String,
    /// Hash of the run configuration that produced the checkpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config_hash: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoadMode {
    /// Every parameter must be present and the config hash must match.
    Strict,
    /// Only `frontend.*` parameters are copied; frontend configs must match.
    FrontendOnly,
}

/// Named-array snapshot of a network plus provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: BTreeMap<String, ArrayD<f64>>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn capture<N: Network + ?Sized>(model: &mut N, stage: &str, epoch: usize, metrics: BTreeMap<String, f64>) -> Self {
        let mut params = BTreeMap::new();
        model.visit("", &mut |name, p| {
            params.insert(name.to_string(), p.value.clone());
        });
        let mut meta = CheckpointMeta {
            config_hash: model.config_hash(),
            frontend_config_hash: model.frontend_hash(),
            stage: stage.to_string(),
            epoch,
            metrics,
            frontend_param_hash: String::new(),
            run_config_hash: None,
        };
        meta.frontend_param_hash = digest_params(&params, FRONTEND_PREFIX);
        Self { params, meta }
    }

    /// Digest of all parameters whose name starts with `prefix`.
    pub fn param_digest(&self, prefix: &str) -> String {
        digest_params(&self.params, prefix)
    }

    pub fn restore_into<N: Network + ?Sized>(&self, model: &mut N, mode: LoadMode) -> Result<(), ModelError> {
        match mode {
            LoadMode::Strict if self.meta.config_hash != model.config_hash() => {
                return Err(ModelError::ConfigMismatch(format!(
                    "config hash {} != model {}",
                    self.meta.config_hash,
                    model.config_hash()
                )))
            }
            LoadMode::FrontendOnly if self.meta.frontend_config_hash != model.frontend_hash() => {
                return Err(ModelError::ConfigMismatch(format!(
                    "frontend config hash {} != model {}",
                    self.meta.frontend_config_hash,
                    model.frontend_hash()
                )))
            }
            _ => {}
        }
        let mut problems = Vec::new();
        let mut seen = 0usize;
        model.visit("", &mut |name, p| {
            if mode == LoadMode::FrontendOnly && !name.starts_with(FRONTEND_PREFIX) {
                return;
            }
            match self.params.get(name) {
                Some(v) if v.shape() == p.value.shape() => {
                    seen += 1;
                }
                Some(v) => problems.push(format!("{name}: shape {:?} vs {:?}", v.shape(), p.value.shape())),
                None => problems.push(format!("{name}: missing")),
            }
        });
        if !problems.is_empty() {
            return Err(ModelError::ConfigMismatch(problems.join("; ")));
        }
        if seen == 0 {
            return Err(ModelError::ConfigMismatch("no parameters matched".into()));
        }
        model.visit("", &mut |name, p| {
            if mode == LoadMode::FrontendOnly && !name.starts_with(FRONTEND_PREFIX) {
                return;
            }
            p.value.assign(&self.params[name]);
        });
        Ok(())
    }

    fn paths(stem: &Path) -> (PathBuf, PathBuf) {
        (stem.with_extension("safetensors"), stem.with_extension("json"))
    }

    /// Writes `<stem>.safetensors` and `<stem>.json`.
    pub fn save(&self, stem: &Path) -> Result<(), ModelError> {
        let (archive, sidecar) = Self::paths(stem);
        if let Some(dir) = archive.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let bytes: Vec<(String, Vec<u8>, Vec<usize>)> = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().flat_map(|x| x.to_le_bytes()).collect(), v.shape().to_vec()))
            .collect();
        let views = bytes
            .iter()
            .map(|(k, b, s)| {
                TensorView::new(Dtype::F64, s.clone(), b)
                    .map(|v| (k.clone(), v))
                    .map_err(|e| ModelError::Format(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let data = safetensors::serialize(views, &None).map_err(|e| ModelError::Format(e.to_string()))?;
        std::fs::write(archive, data)?;
        std::fs::write(sidecar, serde_json::to_vec_pretty(&self.meta).map_err(|e| ModelError::Format(e.to_string()))?)?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self, ModelError> {
        let (archive, sidecar) = Self::paths(stem);
        let meta: CheckpointMeta =
            serde_json::from_slice(&std::fs::read(sidecar)?).map_err(|e| ModelError::Format(e.to_string()))?;
        let data = std::fs::read(archive)?;
        let st = SafeTensors::deserialize(&data).map_err(|e| ModelError::Format(e.to_string()))?;
        let mut params = BTreeMap::new();
        for (name, view) in st.tensors() {
            if view.dtype() != Dtype::F64 {
                return Err(ModelError::Format(format!("{name}: expected f64, found {:?}", view.dtype())));
            }
            let values: Vec<f64> = view
                .data()
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let arr = ArrayD::from_shape_vec(IxDyn(view.shape()), values).map_err(|e| ModelError::Format(e.to_string()))?;
            params.insert(name, arr);
        }
        Ok(Self { params, meta })
    }
}

fn digest_params(params: &BTreeMap<String, ArrayD<f64>>, prefix: &str) -> String {
    let mut h = Sha256::new();
    for (name, v) in params.range(prefix.to_string()..) {
        if !name.starts_with(prefix) {
            break;
        }
        h.update(name.as_bytes());
        for x in v.iter() {
            h.update(x.to_bits().to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..16])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{WordModel, WordModelConfig};
    use crate::nn::{Ctx, Parameterized};
    use ndarray::Array5;

    #[test]
    fn save_load_forward_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = WordModelConfig::compact(3, (16, 16));
        cfg.seed = 9;
        let mut a = WordModel::new(cfg.clone()).unwrap();
        let ck = Checkpoint::capture(&mut a, "III", 2, BTreeMap::from([("val_acc".to_string(), 0.5)]));
        ck.save(&dir.path().join("ck")).unwrap();
        let back = Checkpoint::load(&dir.path().join("ck")).unwrap();
        assert_eq!(back, ck);

        cfg.seed = 10;
        let mut b = WordModel::new(WordModelConfig { seed: 9, ..cfg }).unwrap();
        // perturb then restore
        b.visit("", &mut |_, p| p.value.mapv_inplace(|v| v + 1.0));
        back.restore_into(&mut b, LoadMode::Strict).unwrap();
        let x = Array5::from_shape_fn((1, 1, 3, 16, 16), |(_, _, t, y, x)| ((t + y * x) % 7) as f64 / 7.0);
        let ya = a.logits(&x, Ctx::eval()).unwrap();
        let yb = b.logits(&x, Ctx::eval()).unwrap();
        assert_eq!(ya, yb);
    }

    #[test]
    fn strict_load_rejects_other_config() {
        let mut a = WordModel::new(WordModelConfig::compact(3, (16, 16))).unwrap();
        let ck = Checkpoint::capture(&mut a, "I", 0, BTreeMap::new());
        let mut b = WordModel::new(WordModelConfig::compact(4, (16, 16))).unwrap();
        assert!(matches!(ck.restore_into(&mut b, LoadMode::Strict), Err(ModelError::ConfigMismatch(_))));
        // vocabulary differs but the frontend does not
        ck.restore_into(&mut b, LoadMode::FrontendOnly).unwrap();
    }
}
