//! A deterministic, weight-free stand-in for the pretrained encoder.
//!
//! Images are average-pooled over 32x32 patches and mapped through a fixed
//! seeded projection, then through `n_blocks` residual blocks, a final layer
//! norm and a square projection. Only the blocks, final norm and projection
//! are parameters, so the whole visual tower is exercisable by the freeze
//! policy and optimizer. Text embeddings are sums of per-token vectors drawn
//! from a stream keyed by a hash of the token.

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::backend::{check_pixels, BackendDescriptor, EncoderBackend};
use crate::model::nn::{gaussian, layer_norm, linear, ones, zeros};
use crate::model::params::{ParamGroup, ParamStore};
use crate::seed::rng_for;

const POOL: usize = 32;
const POOLED_FEATURES: usize = 3 * 7 * 7;
const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StubConfig {
    pub seed: u64,
    pub embed_dim: usize,
    pub n_blocks: usize,
    pub text_support: bool,
    pub logit_scale: f64,
}

impl Default for StubConfig {
    fn default() -> Self {
        Self {
            seed: crate::seed::DEFAULT_SEED,
            embed_dim: 64,
            n_blocks: 4,
            text_support: true,
            logit_scale: 100.0,
        }
    }
}

impl StubConfig {
    pub fn new(seed: u64, embed_dim: usize, n_blocks: usize) -> Self {
        Self {
            seed,
            embed_dim,
            n_blocks,
            ..Self::default()
        }
    }
}

pub struct StubBackend {
    config: StubConfig,
    input_projection: Tensor,
    params: ParamStore,
    device: Device,
}

pub fn stub_backend(seed: u64, embed_dim: usize, n_blocks: usize) -> Result<StubBackend> {
    StubBackend::new(StubConfig::new(seed, embed_dim, n_blocks))
}

impl StubBackend {
    pub fn new(config: StubConfig) -> Result<Self> {
        if config.embed_dim < 2 || config.n_blocks < 1 {
            return Err(Error::InvalidInput(format!(
                "stub backend needs embed_dim >= 2 and n_blocks >= 1, got {} and {}",
                config.embed_dim, config.n_blocks
            )));
        }
        let device = Device::Cpu;
        let d = config.embed_dim;
        let mut rng = rng_for(config.seed, "stub-encoder");
        let input_projection = gaussian(
            &[POOLED_FEATURES, d],
            1.0 / (POOLED_FEATURES as f64).sqrt(),
            &mut rng,
            &device,
        )?;
        let mut params = ParamStore::new();
        for b in 0..config.n_blocks {
            let g = ParamGroup::Block(b);
            params.insert(format!("visual.blocks.{b}.norm.weight"), g, &ones(&[d], &device)?, false)?;
            params.insert(format!("visual.blocks.{b}.norm.bias"), g, &zeros(&[d], &device)?, false)?;
            params.insert(format!("visual.blocks.{b}.fc.weight"), g, &gaussian(&[d, d], 0.02, &mut rng, &device)?, false)?;
            params.insert(format!("visual.blocks.{b}.fc.bias"), g, &zeros(&[d], &device)?, false)?;
        }
        params.insert("visual.post_norm.weight", ParamGroup::PostNorm, &ones(&[d], &device)?, false)?;
        params.insert("visual.post_norm.bias", ParamGroup::PostNorm, &zeros(&[d], &device)?, false)?;
        let eye = Tensor::eye(d, candle_core::DType::F32, &device)?;
        let proj = (eye + gaussian(&[d, d], 0.02, &mut rng, &device)?)?;
        params.insert("visual.proj.weight", ParamGroup::Projection, &proj, false)?;
        Ok(Self {
            config,
            input_projection,
            params,
            device,
        })
    }

    pub fn config(&self) -> &StubConfig {
        &self.config
    }

    fn token_vector(&self, token: &str) -> Result<Tensor> {
        let mut rng = rng_for(self.config.seed, &format!("stub-token/{token}"));
        gaussian(&[self.config.embed_dim], 1.0, &mut rng, &self.device)
    }
}

impl EncoderBackend for StubBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor::Stub(self.config.clone())
    }

    fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    fn num_blocks(&self) -> usize {
        self.config.n_blocks
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn forward(&self, pixels: &Tensor) -> Result<Tensor> {
        let batch = check_pixels(pixels)?;
        let pooled = pixels.avg_pool2d(POOL)?.reshape((batch, POOLED_FEATURES))?;
        let mut h = pooled.matmul(&self.input_projection)?;
        for b in 0..self.config.n_blocks {
            let p = |n: &str| self.params.get(&format!("visual.blocks.{b}.{n}"));
            let z = layer_norm(&h, &p("norm.weight")?, &p("norm.bias")?, LN_EPS)?.gelu_erf()?;
            h = (h + linear(&z, &p("fc.weight")?, Some(&p("fc.bias")?))?)?;
        }
        let h = layer_norm(
            &h,
            &self.params.get("visual.post_norm.weight")?,
            &self.params.get("visual.post_norm.bias")?,
            LN_EPS,
        )?;
        linear(&h, &self.params.get("visual.proj.weight")?, None)
    }

    fn supports_text(&self) -> bool {
        self.config.text_support
    }

    fn encode_text(&self, texts: &[String]) -> Result<Tensor> {
        if !self.config.text_support {
            return Err(Error::Backend("stub backend built without text support".into()));
        }
        let mut rows = Vec::with_capacity(texts.len());
        for text in texts {
            let tokens: Vec<String> = text
                .split(|c: char| !c.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .map(str::to_lowercase)
                .collect();
            let mut v = zeros(&[self.config.embed_dim], &self.device)?;
            for t in &tokens {
                v = (v + self.token_vector(t)?)?;
            }
            rows.push(v);
        }
        Ok(Tensor::stack(&rows, 0)?)
    }

    fn logit_scale(&self) -> f64 {
        self.config.logit_scale
    }

    fn device(&self) -> &Device {
        &self.device
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::image::ImageTensor;
    use crate::model::backend::image_features;

    fn image(v: f32) -> ImageTensor {
        let data = (0..crate::data::image::INPUT_LEN)
            .map(|i| v + (i % 13) as f32 * 0.01)
            .collect();
        ImageTensor::from_vec(data).unwrap()
    }

    #[test]
    fn embeddings_are_deterministic_and_sized() {
        let a = stub_backend(7, 32, 3).unwrap();
        let b = stub_backend(7, 32, 3).unwrap();
        let x = [image(0.2)];
        let ea = image_features(&a, &x).unwrap();
        let eb = image_features(&b, &x).unwrap();
        assert_eq!(ea, eb);
        assert_eq!(ea[0].len(), 32);
        assert!(ea[0].iter().all(|v| v.is_finite()));
    }

    #[test]
    fn batching_does_not_change_an_item() {
        let backend = stub_backend(7, 32, 3).unwrap();
        let batch: Vec<_> = (0..8).map(|i| image(i as f32 * 0.1)).collect();
        let all = image_features(&backend, &batch).unwrap();
        let single = image_features(&backend, &batch[5..6]).unwrap();
        assert_eq!(all[5], single[0]);
    }

    #[test]
    fn rendered_prompts_have_distinct_embeddings() {
        let backend = stub_backend(7, 64, 2).unwrap();
        let prompts = crate::model::prompts::PromptSet::default().render_all();
        let e: Vec<Vec<f32>> = backend.encode_text(&prompts).unwrap().to_vec2().unwrap();
        assert_eq!(e.len(), 14);
        for i in 0..e.len() {
            assert_eq!(e[i].len(), 64);
            for j in 0..i {
                assert_ne!(e[i], e[j]);
            }
        }
    }

    #[test]
    fn rejects_bad_shapes_and_dims() {
        assert!(stub_backend(7, 1, 1).is_err());
        assert!(stub_backend(7, 8, 0).is_err());
        let backend = stub_backend(7, 8, 1).unwrap();
        let wrong = Tensor::zeros((1, 3, 32, 32), candle_core::DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(backend.forward(&wrong), Err(Error::Shape { .. })));
    }

    #[test]
    fn text_can_be_disabled() {
        let backend = StubBackend::new(StubConfig {
            text_support: false,
            ..StubConfig::default()
        })
        .unwrap();
        assert!(!backend.supports_text());
        assert!(backend.encode_text(&["x".into()]).is_err());
    }
}
