//! Prompt-based zero-shot scoring.
//!
//! Each finding is scored by a two-way softmax between its rendered
//! positive prompt and the shared negative prompt, on cosine similarities
//! multiplied by the temperature (the encoder's logit scale by default).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::image::ImageTensor;
use crate::error::{Error, Result};
use crate::labels::{DiseaseLabel, NUM_CLASSES};
use crate::model::backend::{image_features, EncoderBackend};

pub const DISEASE_SLOT: &str = "[disease]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSet {
    pub positive_template: String,
    pub negative_text: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            positive_template: format!("A chest X-ray showing {DISEASE_SLOT}"),
            negative_text: "No finding".into(),
        }
    }
}

impl PromptSet {
    pub fn validate(&self) -> Result<()> {
        if !self.positive_template.contains(DISEASE_SLOT) {
            return Err(Error::Config(vec![format!(
                "positive_template {:?} has no {DISEASE_SLOT} slot",
                self.positive_template
            )]));
        }
        Ok(())
    }

    pub fn render(&self, label: DiseaseLabel) -> String {
        self.positive_template.replace(DISEASE_SLOT, &label.display_name())
    }

    /// One positive prompt per finding, in label order.
    pub fn render_all(&self) -> Vec<String> {
        DiseaseLabel::all().map(|l| self.render(l)).collect()
    }
}

/// Positive-class probability of the two-way softmax over
/// `(temperature * s_pos, temperature * s_neg)`.
pub fn pair_probability(s_pos: f64, s_neg: f64, temperature: f64) -> f64 {
    let z = temperature * (s_pos - s_neg);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn unit(v: &[f32]) -> Vec<f64> {
    let norm = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let norm = if norm > 0.0 { norm } else { 1.0 };
    v.iter().map(|x| *x as f64 / norm).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Precomputed prompt embeddings for repeated scoring.
pub struct ZeroShotScorer {
    positives: Vec<Vec<f64>>,
    negative: Vec<f64>,
    temperature: f64,
}

impl ZeroShotScorer {
    pub fn new(backend: &dyn EncoderBackend, prompts: &PromptSet, temperature: Option<f64>) -> Result<Self> {
        if !backend.supports_text() {
            return Err(Error::Backend("backend has no text encoder".into()));
        }
        prompts.validate()?;
        let temperature = temperature.unwrap_or_else(|| backend.logit_scale());
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidInput(format!("temperature must be positive, got {temperature}")));
        }
        let mut texts = prompts.render_all();
        texts.push(prompts.negative_text.clone());
        let emb: Vec<Vec<f32>> = backend.encode_text(&texts)?.to_dtype(candle_core::DType::F32)?.to_vec2()?;
        let mut emb: Vec<Vec<f64>> = emb.iter().map(|v| unit(v)).collect();
        let negative = emb.pop().expect("negative prompt appended");
        Ok(Self {
            positives: emb,
            negative,
            temperature,
        })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Probabilities from precomputed image embeddings.
    pub fn score_embeddings(&self, embeddings: &[Vec<f32>]) -> Array2<f64> {
        let mut out = Array2::zeros((embeddings.len(), NUM_CLASSES));
        for (i, e) in embeddings.iter().enumerate() {
            let img = unit(e);
            let s_neg = dot(&img, &self.negative);
            for (c, pos) in self.positives.iter().enumerate() {
                out[[i, c]] = pair_probability(dot(&img, pos), s_neg, self.temperature);
            }
        }
        out
    }

    pub fn score(&self, backend: &dyn EncoderBackend, images: &[ImageTensor]) -> Result<Array2<f64>> {
        Ok(self.score_embeddings(&image_features(backend, images)?))
    }
}

/// `batch x 14` positive-prompt probabilities.
pub fn zero_shot_scores(
    backend: &dyn EncoderBackend,
    images: &[ImageTensor],
    prompts: &PromptSet,
    temperature: Option<f64>,
) -> Result<Array2<f64>> {
    ZeroShotScorer::new(backend, prompts, temperature)?.score(backend, images)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::stub::{stub_backend, StubBackend, StubConfig};
    use std::collections::HashSet;

    #[test]
    fn rendered_prompts_are_distinct() {
        let p = PromptSet::default();
        let all = p.render_all();
        assert_eq!(all.len(), 14);
        assert_eq!(all.iter().collect::<HashSet<_>>().len(), 14);
        assert_eq!(all[9], "A chest X-ray showing Pleural Thickening");
    }

    #[test]
    fn equal_similarities_give_one_half() {
        assert_eq!(pair_probability(0.3, 0.3, 100.0), 0.5);
        assert_eq!(pair_probability(-0.7, -0.7, 1.0), 0.5);
    }

    #[test]
    fn pair_probabilities_sum_to_one() {
        for (a, b, t) in [(0.1, 0.4, 100.0), (0.9, -0.2, 3.0), (0.0, 1.0, 0.5)] {
            let p = pair_probability(a, b, t);
            let q = pair_probability(b, a, t);
            assert!((p + q - 1.0).abs() < 1e-15);
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn aligned_positive_dominates() {
        // image embedding equal to the positive prompt, negative orthogonal
        let scorer = ZeroShotScorer {
            positives: vec![vec![1.0, 0.0]; NUM_CLASSES],
            negative: vec![0.0, 1.0],
            temperature: 100.0,
        };
        let p = scorer.score_embeddings(&[vec![1.0, 0.0]]);
        assert!(p[[0, 0]] > 0.5);
    }

    #[test]
    fn invariant_to_embedding_scale() {
        let backend = stub_backend(3, 16, 2).unwrap();
        let scorer = ZeroShotScorer::new(&backend, &PromptSet::default(), None).unwrap();
        let e: Vec<f32> = (0..16).map(|i| (i as f32 - 7.5) * 0.1).collect();
        let scaled: Vec<f32> = e.iter().map(|v| v * 8.0).collect();
        let a = scorer.score_embeddings(&[e]);
        let b = scorer.score_embeddings(&[scaled]);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn requires_text_and_positive_temperature() {
        let no_text = StubBackend::new(StubConfig {
            text_support: false,
            ..StubConfig::default()
        })
        .unwrap();
        assert!(ZeroShotScorer::new(&no_text, &PromptSet::default(), None).is_err());
        let backend = stub_backend(3, 16, 2).unwrap();
        assert!(ZeroShotScorer::new(&backend, &PromptSet::default(), Some(0.0)).is_err());
        let bad = PromptSet {
            positive_template: "no slot".into(),
            ..PromptSet::default()
        };
        assert!(ZeroShotScorer::new(&backend, &bad, None).is_err());
    }
}
