//! The multi-label classification head on top of encoder embeddings.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::NUM_CLASSES;
use crate::model::nn::{dropout, kaiming_normal, layer_norm, linear, ones, zeros};
use crate::model::params::{ParamGroup, ParamStore};
use crate::seed::{rng_for, Rng};

const LN_EPS: f64 = 1e-5;
const DEFAULT_DROPOUT: (f64, f64) = (0.3, 0.2);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub in_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub out_dim: usize,
    pub dropout1: f64,
    pub dropout2: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self::for_embed_dim(512)
    }
}

impl HeadConfig {
    pub fn for_embed_dim(in_dim: usize) -> Self {
        Self {
            in_dim,
            hidden1: 512,
            hidden2: 256,
            out_dim: NUM_CLASSES,
            dropout1: DEFAULT_DROPOUT.0,
            dropout2: DEFAULT_DROPOUT.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("in_dim", self.in_dim),
            ("hidden1", self.hidden1),
            ("hidden2", self.hidden2),
            ("out_dim", self.out_dim),
        ] {
            if v == 0 {
                problems.push(format!("head {name} must be positive"));
            }
        }
        if self.out_dim != NUM_CLASSES {
            problems.push(format!("head out_dim must be {NUM_CLASSES}, got {}", self.out_dim));
        }
        for (name, p) in [("dropout1", self.dropout1), ("dropout2", self.dropout2)] {
            if !(0.0..1.0).contains(&p) {
                problems.push(format!("head {name} {p} outside [0, 1)"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Closed-form parameter count: three linear layers and two layer norms.
    pub fn param_count(&self) -> usize {
        let (i, h1, h2, o) = (self.in_dim, self.hidden1, self.hidden2, self.out_dim);
        (i * h1 + h1) + 2 * h1 + (h1 * h2 + h2) + 2 * h2 + (h2 * o + o)
    }
}

/// Linear, LayerNorm, GELU, Dropout, twice, then the output layer.
#[derive(Debug, Clone)]
pub struct ClassificationHead {
    config: HeadConfig,
    params: ParamStore,
    device: Device,
}

pub fn build_head(config: HeadConfig, init_seed: u64) -> Result<ClassificationHead> {
    ClassificationHead::new(config, init_seed, &Device::Cpu)
}

impl ClassificationHead {
    pub fn new(config: HeadConfig, init_seed: u64, device: &Device) -> Result<Self> {
        if config.dropout1 != DEFAULT_DROPOUT.0 || config.dropout2 != DEFAULT_DROPOUT.1 {
            log::warn!(
                "head dropout overridden to ({}, {})",
                config.dropout1,
                config.dropout2
            );
        }
        config.validate()?;
        let mut rng = rng_for(init_seed, "head-init");
        let mut params = ParamStore::new();
        let dims = [
            ("fc1", config.in_dim, config.hidden1),
            ("fc2", config.hidden1, config.hidden2),
            ("out", config.hidden2, config.out_dim),
        ];
        for (i, (name, fan_in, fan_out)) in dims.into_iter().enumerate() {
            let w = kaiming_normal(fan_out, fan_in, &mut rng, device)?;
            params.insert(format!("head.{name}.weight"), ParamGroup::Head, &w, true)?;
            params.insert(format!("head.{name}.bias"), ParamGroup::Head, &zeros(&[fan_out], device)?, true)?;
            if i < 2 {
                params.insert(format!("head.norm{}.weight", i + 1), ParamGroup::Head, &ones(&[fan_out], device)?, true)?;
                params.insert(format!("head.norm{}.bias", i + 1), ParamGroup::Head, &zeros(&[fan_out], device)?, true)?;
            }
        }
        Ok(Self {
            config,
            params,
            device: device.clone(),
        })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn param_count(&self) -> usize {
        self.params.count(|_| true)
    }

    /// `(B, in_dim)` features to `(B, 14)` logits. Dropout is active only
    /// when a rng is supplied.
    pub fn forward(&self, features: &Tensor, mut dropout_rng: Option<&mut Rng>) -> Result<Tensor> {
        match features.dims() {
            [_, d] if *d == self.config.in_dim => {}
            dims => {
                return Err(Error::Shape {
                    expected: format!("(B, {})", self.config.in_dim),
                    actual: format!("{dims:?}"),
                })
            }
        }
        let p = |n: &str| self.params.get(&format!("head.{n}"));
        let x = features.to_dtype(DType::F32)?;
        let mut h = x;
        for (i, rate) in [(1, self.config.dropout1), (2, self.config.dropout2)] {
            h = linear(&h, &p(&format!("fc{i}.weight"))?, Some(&p(&format!("fc{i}.bias"))?))?;
            h = layer_norm(&h, &p(&format!("norm{i}.weight"))?, &p(&format!("norm{i}.bias"))?, LN_EPS)?;
            h = h.gelu_erf()?;
            if let Some(rng) = dropout_rng.as_deref_mut() {
                h = dropout(&h, rate, rng)?;
            }
        }
        linear(&h, &p("out.weight")?, Some(&p("out.bias")?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Independent tally: add up every tensor's element count by hand.
    fn tally(c: &HeadConfig) -> usize {
        let layers = [(c.in_dim, c.hidden1), (c.hidden1, c.hidden2), (c.hidden2, c.out_dim)];
        let mut n = 0;
        for (fan_in, fan_out) in layers {
            for _ in 0..fan_out {
                for _ in 0..fan_in {
                    n += 1;
                }
                n += 1;
            }
        }
        n + 2 * c.hidden1 + 2 * c.hidden2
    }

    #[test]
    fn default_head_has_399118_parameters() {
        let c = HeadConfig::for_embed_dim(512);
        assert_eq!(tally(&c), 399_118);
        assert_eq!(c.param_count(), 399_118);
        assert_eq!(build_head(c, 7).unwrap().param_count(), 399_118);
    }

    #[test]
    fn formula_matches_built_head_for_other_shapes() {
        for (i, h1, h2) in [(3, 5, 7), (64, 32, 16), (1, 1, 1)] {
            let c = HeadConfig {
                in_dim: i,
                hidden1: h1,
                hidden2: h2,
                ..HeadConfig::default()
            };
            assert_eq!(build_head(c, 1).unwrap().param_count(), c.param_count());
            assert_eq!(c.param_count(), tally(&c));
        }
    }

    #[test]
    fn init_is_seeded_and_biases_start_at_zero() {
        let a = build_head(HeadConfig::for_embed_dim(32), 7).unwrap();
        let b = build_head(HeadConfig::for_embed_dim(32), 7).unwrap();
        let c = build_head(HeadConfig::for_embed_dim(32), 8).unwrap();
        assert_eq!(a.params().digest(|_| true).unwrap(), b.params().digest(|_| true).unwrap());
        assert_ne!(a.params().digest(|_| true).unwrap(), c.params().digest(|_| true).unwrap());
        let bias: Vec<f32> = a.params().get("head.fc1.bias").unwrap().to_vec1().unwrap();
        assert!(bias.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn eval_mode_is_deterministic_and_train_mode_drops() {
        let head = build_head(HeadConfig::for_embed_dim(16), 7).unwrap();
        let x = Tensor::ones((4, 16), DType::F32, &Device::Cpu).unwrap();
        let a: Vec<Vec<f32>> = head.forward(&x, None).unwrap().to_vec2().unwrap();
        let b: Vec<Vec<f32>> = head.forward(&x, None).unwrap().to_vec2().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert_eq!(a[0].len(), NUM_CLASSES);
        let mut rng = Rng::seed_from_u64(0);
        let t: Vec<Vec<f32>> = head.forward(&x, Some(&mut rng)).unwrap().to_vec2().unwrap();
        assert_ne!(a, t);
    }

    #[test]
    fn rejects_bad_configs_and_inputs() {
        let zero = HeadConfig {
            hidden1: 0,
            ..HeadConfig::default()
        };
        assert!(build_head(zero, 7).is_err());
        let wrong_out = HeadConfig {
            out_dim: 15,
            ..HeadConfig::default()
        };
        assert!(build_head(wrong_out, 7).is_err());
        let head = build_head(HeadConfig::for_embed_dim(8), 7).unwrap();
        let x = Tensor::ones((2, 9), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(head.forward(&x, None), Err(Error::Shape { .. })));
    }
}
