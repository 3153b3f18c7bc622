//! The encoder abstraction shared by the pretrained and stub backends.

use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::data::image::{ImageTensor, CHANNELS, INPUT_LEN, INPUT_SIZE};
use crate::error::{Error, Result};
use crate::model::clip::ClipBackend;
use crate::model::params::{ParamGroup, ParamStore};
use crate::model::stub::{StubBackend, StubConfig};

/// Enough information to rebuild a backend's base weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendDescriptor {
    Stub(StubConfig),
    Real { weights_path: PathBuf },
}

impl BackendDescriptor {
    pub fn build(&self) -> Result<Box<dyn EncoderBackend>> {
        Ok(match self {
            BackendDescriptor::Stub(cfg) => Box::new(StubBackend::new(cfg.clone())?),
            BackendDescriptor::Real { weights_path } => Box::new(ClipBackend::load(Path::new(weights_path))?),
        })
    }
}

pub trait EncoderBackend: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;

    /// Width of the joint image/text embedding space.
    fn embed_dim(&self) -> usize;

    /// Number of residual blocks in the visual tower.
    fn num_blocks(&self) -> usize;

    fn params(&self) -> &ParamStore;

    fn params_mut(&mut self) -> &mut ParamStore;

    /// `(B, 3, 224, 224)` normalized pixels to `(B, embed_dim)` embeddings.
    /// Gradients flow to the trainable parameters.
    fn forward(&self, pixels: &Tensor) -> Result<Tensor>;

    fn supports_text(&self) -> bool;

    /// `(n, embed_dim)` text embeddings.
    fn encode_text(&self, texts: &[String]) -> Result<Tensor>;

    /// Multiplier applied to cosine similarities in prompt scoring.
    fn logit_scale(&self) -> f64;

    fn device(&self) -> &Device;

    /// `(group, parameter count)` for every visual parameter.
    fn visual_inventory(&self) -> Vec<(ParamGroup, usize)> {
        self.params()
            .iter()
            .filter(|p| p.group.is_visual())
            .map(|p| (p.group, p.numel()))
            .collect()
    }
}

pub fn images_to_tensor(images: &[ImageTensor], device: &Device) -> Result<Tensor> {
    let mut flat = Vec::with_capacity(images.len() * INPUT_LEN);
    for img in images {
        flat.extend_from_slice(img.as_slice());
    }
    Ok(Tensor::from_vec(flat, (images.len(), CHANNELS, INPUT_SIZE, INPUT_SIZE), device)?)
}

pub(crate) fn check_pixels(pixels: &Tensor) -> Result<usize> {
    match pixels.dims() {
        [b, CHANNELS, INPUT_SIZE, INPUT_SIZE] => Ok(*b),
        dims => Err(Error::Shape {
            expected: format!("(B, {CHANNELS}, {INPUT_SIZE}, {INPUT_SIZE})"),
            actual: format!("{dims:?}"),
        }),
    }
}

/// Evaluation-mode embeddings, one row per input image, in input order.
pub fn image_features(backend: &dyn EncoderBackend, images: &[ImageTensor]) -> Result<Vec<Vec<f32>>> {
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let x = images_to_tensor(images, backend.device())?;
    embed_pixels(backend, &x)
}

pub(crate) fn embed_pixels(backend: &dyn EncoderBackend, pixels: &Tensor) -> Result<Vec<Vec<f32>>> {
    let out = backend.forward(pixels)?.detach().to_dtype(DType::F32)?;
    let rows: Vec<Vec<f32>> = out.to_vec2()?;
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Backend("non-finite image embedding".into()));
    }
    Ok(rows)
}
