//! Self-describing checkpoint archives.
//!
//! A checkpoint is a safetensors file. Tensors hold the head and every
//! encoder parameter the adaptation policy made trainable, keyed by
//! canonical parameter name; base encoder weights are rebuilt from the
//! backend descriptor. Configuration, seed, epoch and metric history are
//! stored as JSON under the `xrayclip.meta` header key.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::backend::{BackendDescriptor, EncoderBackend};
use crate::model::freeze::{apply_freeze_policy, FreezePolicy};
use crate::model::head::{ClassificationHead, HeadConfig};
use crate::model::params::ParamGroup;
use crate::model::prompts::PromptSet;
use crate::train::trace::EpochRecord;

pub const META_KEY: &str = "xrayclip.meta";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub backend: BackendDescriptor,
    pub freeze: FreezePolicy,
    pub head: HeadConfig,
    pub prompts: PromptSet,
    pub seed: u64,
    /// Digest of the run configuration that produced the checkpoint.
    pub config_digest: String,
    pub epoch: usize,
    /// Whether the encoder went through domain adaptation.
    pub adapted: bool,
    /// Last training stage that produced this checkpoint.
    pub stage: String,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    /// Copies the head and the policy-trainable encoder parameters.
    pub fn capture(backend: &dyn EncoderBackend, head: &ClassificationHead, meta: CheckpointMeta) -> Result<Self> {
        let n_blocks = backend.num_blocks();
        let policy = meta.freeze;
        let mut tensors = backend
            .params()
            .snapshot(|p| p.group.is_visual() && policy.is_trainable(p.group, n_blocks))?;
        tensors.extend(head.params().snapshot(|_| true)?);
        Ok(Self { meta, tensors })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_string(&self.meta)?;
        let info = HashMap::from([(META_KEY.to_string(), meta)]);
        let data: Vec<(&str, &Tensor)> = self.tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
        safetensors::serialize(data, Some(info)).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (_, header) = safetensors::SafeTensors::read_metadata(bytes)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let meta_json = header
            .metadata()
            .as_ref()
            .and_then(|m| m.get(META_KEY))
            .ok_or_else(|| Error::Checkpoint(format!("no {META_KEY} header")))?;
        let meta: CheckpointMeta = serde_json::from_str(meta_json)?;
        if meta.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                meta.format_version
            )));
        }
        let mut tensors: Vec<(String, Tensor)> =
            candle_core::safetensors::load_buffer(bytes, &Device::Cpu)?.into_iter().collect();
        tensors.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::file(path, e),
        })?;
        Self::from_bytes(&bytes).map_err(|e| Error::file(path, e))
    }

    /// Rebuilds the encoder (with the stored freeze policy applied) and head.
    pub fn restore(&self) -> Result<(Box<dyn EncoderBackend>, ClassificationHead)> {
        let mut backend = self.meta.backend.build()?;
        apply_freeze_policy(backend.as_mut(), &self.meta.freeze)?;
        let mut head = ClassificationHead::new(self.meta.head, self.meta.seed, backend.device())?;
        let (head_t, enc_t): (Vec<_>, Vec<_>) = self
            .tensors
            .iter()
            .cloned()
            .partition(|(n, _)| head.params().param(n).map(|p| p.group == ParamGroup::Head).unwrap_or(false));
        backend.params().restore(&enc_t)?;
        head.params_mut().restore(&head_t)?;
        Ok((backend, head))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::image::ImageTensor;
    use crate::model::inference::classify;
    use crate::model::stub::StubConfig;

    fn meta(cfg: StubConfig) -> CheckpointMeta {
        CheckpointMeta {
            format_version: FORMAT_VERSION,
            backend: BackendDescriptor::Stub(cfg),
            freeze: FreezePolicy {
                k_top_blocks: 1,
                unfreeze_post_norm_and_projection: true,
            },
            head: HeadConfig::for_embed_dim(16),
            prompts: PromptSet::default(),
            seed: 7,
            config_digest: "test".into(),
            epoch: 3,
            adapted: true,
            stage: "adapt".into(),
            history: vec![],
        }
    }

    #[test]
    fn round_trip_reproduces_outputs_bit_for_bit() {
        let cfg = StubConfig::new(7, 16, 2);
        let m = meta(cfg);
        let mut backend = m.backend.build().unwrap();
        apply_freeze_policy(backend.as_mut(), &m.freeze).unwrap();
        let head = ClassificationHead::new(m.head, 7, backend.device()).unwrap();
        // perturb trainable weights so the base weights alone are not enough
        for p in backend.params().iter().filter(|p| p.trainable) {
            let t = (p.var.as_tensor() * 1.5).unwrap();
            p.var.set(&t).unwrap();
        }
        let images: Vec<_> = (0..2).map(|i| ImageTensor::filled([0.1 * i as f32; 3])).collect();
        let before = classify(backend.as_ref(), &head, &images).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.safetensors");
        Checkpoint::capture(backend.as_ref(), &head, m.clone()).unwrap().save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.meta, m);
        let (b2, h2) = loaded.restore().unwrap();
        let after = classify(b2.as_ref(), &h2, &images).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn missing_or_foreign_files_fail() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            Checkpoint::load(&dir.path().join("none")),
            Err(Error::MissingFile(_))
        ));
        let junk = dir.path().join("junk");
        std::fs::write(&junk, b"not a checkpoint").unwrap();
        assert!(Checkpoint::load(&junk).is_err());
    }
}
