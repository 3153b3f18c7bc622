//! Pretrained ViT-B/32 vision-language encoder, loaded from a local
//! safetensors checkpoint in the Hugging Face `CLIPModel` layout.
//!
//! The transformer is assembled from primitive tensor ops so gradients can
//! reach whichever blocks the freeze policy leaves trainable. Weights are
//! never downloaded; the loader expects `model.safetensors` (and
//! `tokenizer.json` for prompt scoring) in the configured directory.

use std::path::{Path, PathBuf};

use candle_core::{DType, Device, IndexOp, Tensor};
use tokenizers::Tokenizer;

use crate::error::{Error, Result};
use crate::model::backend::{check_pixels, BackendDescriptor, EncoderBackend};
use crate::model::nn::{layer_norm, linear, quick_gelu, softmax_last};
use crate::model::params::{ParamGroup, ParamStore};

const LN_EPS: f64 = 1e-5;
pub const WEIGHTS_FILE: &str = "model.safetensors";
pub const TOKENIZER_FILE: &str = "tokenizer.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TowerArch {
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClipArch {
    pub vision: TowerArch,
    pub text: TowerArch,
    pub patch: usize,
    pub image: usize,
    pub embed_dim: usize,
    pub vocab: usize,
    pub context: usize,
}

impl ClipArch {
    pub fn vit_b32() -> Self {
        Self {
            vision: TowerArch {
                width: 768,
                layers: 12,
                heads: 12,
                mlp: 3072,
            },
            text: TowerArch {
                width: 512,
                layers: 12,
                heads: 8,
                mlp: 2048,
            },
            patch: 32,
            image: 224,
            embed_dim: 512,
            vocab: 49408,
            context: 77,
        }
    }

    fn num_positions(&self) -> usize {
        (self.image / self.patch).pow(2) + 1
    }

    /// Every parameter: name, shape and group, in checkpoint naming.
    pub fn inventory(&self) -> Vec<(String, Vec<usize>, ParamGroup)> {
        let mut out = Vec::new();
        let v = self.vision;
        let stem = ParamGroup::Stem;
        out.push(("vision_model.embeddings.patch_embedding.weight".into(), vec![v.width, 3, self.patch, self.patch], stem));
        out.push(("vision_model.embeddings.class_embedding".into(), vec![v.width], stem));
        out.push(("vision_model.embeddings.position_embedding.weight".into(), vec![self.num_positions(), v.width], stem));
        out.push(("vision_model.pre_layrnorm.weight".into(), vec![v.width], stem));
        out.push(("vision_model.pre_layrnorm.bias".into(), vec![v.width], stem));
        for i in 0..v.layers {
            push_layer(&mut out, &format!("vision_model.encoder.layers.{i}"), v, ParamGroup::Block(i));
        }
        out.push(("vision_model.post_layernorm.weight".into(), vec![v.width], ParamGroup::PostNorm));
        out.push(("vision_model.post_layernorm.bias".into(), vec![v.width], ParamGroup::PostNorm));
        out.push(("visual_projection.weight".into(), vec![self.embed_dim, v.width], ParamGroup::Projection));

        let t = self.text;
        let text = ParamGroup::Text;
        out.push(("text_model.embeddings.token_embedding.weight".into(), vec![self.vocab, t.width], text));
        out.push(("text_model.embeddings.position_embedding.weight".into(), vec![self.context, t.width], text));
        for i in 0..t.layers {
            push_layer(&mut out, &format!("text_model.encoder.layers.{i}"), t, text);
        }
        out.push(("text_model.final_layer_norm.weight".into(), vec![t.width], text));
        out.push(("text_model.final_layer_norm.bias".into(), vec![t.width], text));
        out.push(("text_projection.weight".into(), vec![self.embed_dim, t.width], text));
        out.push(("logit_scale".into(), vec![], text));
        out
    }

    /// `(group, count)` over the visual tower only.
    pub fn visual_inventory(&self) -> Vec<(ParamGroup, usize)> {
        self.inventory()
            .into_iter()
            .filter(|(_, _, g)| g.is_visual())
            .map(|(_, shape, g)| (g, shape.iter().product()))
            .collect()
    }
}

fn push_layer(out: &mut Vec<(String, Vec<usize>, ParamGroup)>, prefix: &str, a: TowerArch, g: ParamGroup) {
    let w = a.width;
    for proj in ["q_proj", "k_proj", "v_proj", "out_proj"] {
        out.push((format!("{prefix}.self_attn.{proj}.weight"), vec![w, w], g));
        out.push((format!("{prefix}.self_attn.{proj}.bias"), vec![w], g));
    }
    for ln in ["layer_norm1", "layer_norm2"] {
        out.push((format!("{prefix}.{ln}.weight"), vec![w], g));
        out.push((format!("{prefix}.{ln}.bias"), vec![w], g));
    }
    out.push((format!("{prefix}.mlp.fc1.weight"), vec![a.mlp, w], g));
    out.push((format!("{prefix}.mlp.fc1.bias"), vec![a.mlp], g));
    out.push((format!("{prefix}.mlp.fc2.weight"), vec![w, a.mlp], g));
    out.push((format!("{prefix}.mlp.fc2.bias"), vec![w], g));
}

pub struct ClipBackend {
    arch: ClipArch,
    weights_path: PathBuf,
    params: ParamStore,
    tokenizer: Option<Tokenizer>,
    device: Device,
}

impl ClipBackend {
    /// `path` is a directory holding `model.safetensors`, or the weights file itself.
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_arch(path, ClipArch::vit_b32())
    }

    pub fn load_with_arch(path: &Path, arch: ClipArch) -> Result<Self> {
        let (dir, weights) = if path.is_dir() {
            (path.to_path_buf(), path.join(WEIGHTS_FILE))
        } else {
            (path.parent().map(Path::to_path_buf).unwrap_or_default(), path.to_path_buf())
        };
        if !weights.exists() {
            return Err(Error::MissingFile(weights));
        }
        let device = Device::Cpu;
        let mut tensors = candle_core::safetensors::load(&weights, &device)?;
        let mut params = ParamStore::new();
        for (name, shape, group) in arch.inventory() {
            let t = tensors
                .remove(&name)
                .ok_or_else(|| Error::Backend(format!("{}: missing tensor {name}", weights.display())))?;
            if t.dims() != shape.as_slice() {
                return Err(Error::Backend(format!(
                    "{name}: expected shape {shape:?}, found {:?}",
                    t.dims()
                )));
            }
            params.insert(name, group, &t.to_dtype(DType::F32)?, false)?;
        }
        let tok_path = dir.join(TOKENIZER_FILE);
        let tokenizer = if tok_path.exists() {
            Some(Tokenizer::from_file(&tok_path).map_err(|e| Error::file(&tok_path, e))?)
        } else {
            log::warn!("{} not found; prompt scoring disabled", tok_path.display());
            None
        };
        Ok(Self {
            arch,
            weights_path: path.to_path_buf(),
            params,
            tokenizer,
            device,
        })
    }

    pub fn arch(&self) -> &ClipArch {
        &self.arch
    }

    fn encoder_layer(&self, x: &Tensor, prefix: &str, heads: usize, mask: Option<&Tensor>) -> Result<Tensor> {
        let p = |n: &str| self.params.get(&format!("{prefix}.{n}"));
        let (b, l, w) = x.dims3()?;
        let hd = w / heads;
        let h = layer_norm(x, &p("layer_norm1.weight")?, &p("layer_norm1.bias")?, LN_EPS)?;
        let split = |t: Tensor| -> Result<Tensor> {
            Ok(t.reshape((b, l, heads, hd))?.transpose(1, 2)?.contiguous()?)
        };
        let q = split((linear(&h, &p("self_attn.q_proj.weight")?, Some(&p("self_attn.q_proj.bias")?))?
            * (hd as f64).powf(-0.5))?)?;
        let k = split(linear(&h, &p("self_attn.k_proj.weight")?, Some(&p("self_attn.k_proj.bias")?))?)?;
        let v = split(linear(&h, &p("self_attn.v_proj.weight")?, Some(&p("self_attn.v_proj.bias")?))?)?;
        let mut scores = q.matmul(&k.t()?.contiguous()?)?;
        if let Some(m) = mask {
            scores = scores.broadcast_add(m)?;
        }
        let attn = softmax_last(&scores)?.matmul(&v)?;
        let attn = attn.transpose(1, 2)?.contiguous()?.reshape((b, l, w))?;
        let attn = linear(&attn, &p("self_attn.out_proj.weight")?, Some(&p("self_attn.out_proj.bias")?))?;
        let x = (x + attn)?;
        let h = layer_norm(&x, &p("layer_norm2.weight")?, &p("layer_norm2.bias")?, LN_EPS)?;
        let h = quick_gelu(&linear(&h, &p("mlp.fc1.weight")?, Some(&p("mlp.fc1.bias")?))?)?;
        let h = linear(&h, &p("mlp.fc2.weight")?, Some(&p("mlp.fc2.bias")?))?;
        Ok((x + h)?)
    }

    fn encode_ids(&self, ids: &[u32]) -> Result<Tensor> {
        let t = self.arch.text;
        let l = ids.len();
        let ids_t = Tensor::new(ids, &self.device)?;
        let tok = self.params.get("text_model.embeddings.token_embedding.weight")?;
        let pos = self.params.get("text_model.embeddings.position_embedding.weight")?;
        let x = tok.index_select(&ids_t, 0)?.broadcast_add(&pos.narrow(0, 0, l)?)?.unsqueeze(0)?;
        let mask: Vec<f32> = (0..l * l)
            .map(|i| if i % l > i / l { f32::NEG_INFINITY } else { 0.0 })
            .collect();
        let mask = Tensor::from_vec(mask, (l, l), &self.device)?;
        let mut x = x;
        for i in 0..t.layers {
            x = self.encoder_layer(&x, &format!("text_model.encoder.layers.{i}"), t.heads, Some(&mask))?;
        }
        let x = layer_norm(
            &x,
            &self.params.get("text_model.final_layer_norm.weight")?,
            &self.params.get("text_model.final_layer_norm.bias")?,
            LN_EPS,
        )?;
        // pooled at the end-of-text token, which carries the highest id
        let eos = ids
            .iter()
            .enumerate()
            .max_by_key(|(_, id)| **id)
            .map(|(i, _)| i)
            .unwrap_or(l - 1);
        let pooled = x.i((.., eos, ..))?;
        linear(&pooled, &self.params.get("text_projection.weight")?, None)
    }
}

impl EncoderBackend for ClipBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor::Real {
            weights_path: self.weights_path.clone(),
        }
    }

    fn embed_dim(&self) -> usize {
        self.arch.embed_dim
    }

    fn num_blocks(&self) -> usize {
        self.arch.vision.layers
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn forward(&self, pixels: &Tensor) -> Result<Tensor> {
        let batch = check_pixels(pixels)?;
        let v = self.arch.vision;
        let p = |n: &str| self.params.get(&format!("vision_model.{n}"));
        let patches = pixels
            .conv2d(&p("embeddings.patch_embedding.weight")?, 0, self.arch.patch, 1, 1)?
            .flatten_from(2)?
            .transpose(1, 2)?;
        let cls = p("embeddings.class_embedding")?.reshape((1, 1, v.width))?.broadcast_as((batch, 1, v.width))?;
        let x = Tensor::cat(&[&cls, &patches], 1)?
            .broadcast_add(&p("embeddings.position_embedding.weight")?)?;
        let mut x = layer_norm(&x, &p("pre_layrnorm.weight")?, &p("pre_layrnorm.bias")?, LN_EPS)?;
        for i in 0..v.layers {
            x = self.encoder_layer(&x, &format!("vision_model.encoder.layers.{i}"), v.heads, None)?;
        }
        let pooled = x.i((.., 0, ..))?;
        let pooled = layer_norm(&pooled, &p("post_layernorm.weight")?, &p("post_layernorm.bias")?, LN_EPS)?;
        linear(&pooled, &self.params.get("visual_projection.weight")?, None)
    }

    fn supports_text(&self) -> bool {
        self.tokenizer.is_some()
    }

    fn encode_text(&self, texts: &[String]) -> Result<Tensor> {
        let tokenizer = self
            .tokenizer
            .as_ref()
            .ok_or_else(|| Error::Backend(format!("no {TOKENIZER_FILE} next to the weights")))?;
        let mut rows = Vec::with_capacity(texts.len());
        for text in texts {
            let enc = tokenizer
                .encode(text.as_str(), true)
                .map_err(|e| Error::Backend(format!("tokenizing {text:?}: {e}")))?;
            let mut ids = enc.get_ids().to_vec();
            ids.truncate(self.arch.context);
            rows.push(self.encode_ids(&ids)?.squeeze(0)?.detach());
        }
        Ok(Tensor::stack(&rows, 0)?)
    }

    fn logit_scale(&self) -> f64 {
        self.params
            .get("logit_scale")
            .and_then(|t| Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?))
            .map(f64::exp)
            .unwrap_or(100.0)
    }

    fn device(&self) -> &Device {
        &self.device
    }
}
