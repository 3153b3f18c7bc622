//! Evaluation-mode scoring of images and datasets.

use candle_core::{DType, Tensor};
use ndarray::Array2;

use crate::data::dataset::ImageDataset;
use crate::data::image::ImageTensor;
use crate::error::{Error, Result};
use crate::eval::{ScoreMatrix, ScoreSource};
use crate::labels::NUM_CLASSES;
use crate::model::backend::{embed_pixels, images_to_tensor, EncoderBackend};
use crate::model::head::ClassificationHead;
use crate::model::prompts::{PromptSet, ZeroShotScorer};

pub const EVAL_BATCH: usize = 32;

fn check_dims(backend: &dyn EncoderBackend, head: &ClassificationHead) -> Result<()> {
    if head.config().in_dim != backend.embed_dim() {
        return Err(Error::Shape {
            expected: format!("head in_dim {}", backend.embed_dim()),
            actual: format!("{}", head.config().in_dim),
        });
    }
    Ok(())
}

fn logits_from_features(head: &ClassificationHead, features: &[Vec<f32>]) -> Result<Array2<f64>> {
    let n = features.len();
    let d = head.config().in_dim;
    let flat: Vec<f32> = features.iter().flatten().copied().collect();
    let x = Tensor::from_vec(flat, (n, d), head.device())?;
    let logits: Vec<f32> = head.forward(&x, None)?.to_dtype(DType::F32)?.flatten_all()?.to_vec1()?;
    let out = Array2::from_shape_vec((n, NUM_CLASSES), logits.into_iter().map(f64::from).collect())
        .expect("head emits batch x 14");
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Backend("non-finite logits".into()));
    }
    Ok(out)
}

/// `batch x 14` head logits in evaluation mode.
pub fn classify(backend: &dyn EncoderBackend, head: &ClassificationHead, images: &[ImageTensor]) -> Result<Array2<f64>> {
    check_dims(backend, head)?;
    if images.is_empty() {
        return Ok(Array2::zeros((0, NUM_CLASSES)));
    }
    let features = embed_pixels(backend, &images_to_tensor(images, backend.device())?)?;
    logits_from_features(head, &features)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Evaluation-mode embeddings of every image in a dataset, in order.
pub fn dataset_features(backend: &dyn EncoderBackend, dataset: &ImageDataset) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(dataset.len());
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let images = dataset.load_batch(chunk, None)?;
        out.extend(embed_pixels(backend, &images_to_tensor(&images, backend.device())?)?);
    }
    Ok(out)
}

fn labels_matrix(dataset: &ImageDataset) -> Array2<u8> {
    let mut labels = Array2::zeros((dataset.len(), NUM_CLASSES));
    for (i, l) in dataset.labels().iter().enumerate() {
        for c in 0..NUM_CLASSES {
            labels[[i, c]] = l[c];
        }
    }
    labels
}

/// Sigmoid head scores for a dataset.
pub fn score_with_head(backend: &dyn EncoderBackend, head: &ClassificationHead, dataset: &ImageDataset) -> Result<ScoreMatrix> {
    check_dims(backend, head)?;
    let features = dataset_features(backend, dataset)?;
    head_scores_from_features(head, &features, dataset)
}

pub fn head_scores_from_features(head: &ClassificationHead, features: &[Vec<f32>], dataset: &ImageDataset) -> Result<ScoreMatrix> {
    let logits = if features.is_empty() {
        Array2::zeros((0, NUM_CLASSES))
    } else {
        logits_from_features(head, features)?
    };
    ScoreMatrix::new(logits.mapv(sigmoid), labels_matrix(dataset), ScoreSource::HeadLogits)
}

/// Prompt-pair probabilities for a dataset.
pub fn score_with_prompts(
    backend: &dyn EncoderBackend,
    prompts: &PromptSet,
    temperature: Option<f64>,
    dataset: &ImageDataset,
) -> Result<ScoreMatrix> {
    let scorer = ZeroShotScorer::new(backend, prompts, temperature)?;
    let features = dataset_features(backend, dataset)?;
    ScoreMatrix::new(scorer.score_embeddings(&features), labels_matrix(dataset), ScoreSource::ZeroShotPrompts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::head::{build_head, HeadConfig};
    use crate::model::stub::stub_backend;

    #[test]
    fn zero_features_through_zeroed_output_layer_score_one_half() {
        let head = build_head(HeadConfig::for_embed_dim(8), 7).unwrap();
        let zero = Tensor::zeros((14, 256), DType::F32, head.device()).unwrap();
        head.params().param("head.out.weight").unwrap().var.set(&zero).unwrap();
        let logits = logits_from_features(&head, &[vec![0.0; 8], vec![0.0; 8]]).unwrap();
        assert_eq!(logits.dim(), (2, NUM_CLASSES));
        assert!(logits.iter().all(|v| *v == 0.0));
        assert!(logits.mapv(sigmoid).iter().all(|p| *p == 0.5));
    }

    #[test]
    fn classify_shape_and_repeatability() {
        let backend = stub_backend(7, 16, 2).unwrap();
        let head = build_head(HeadConfig::for_embed_dim(16), 7).unwrap();
        let images: Vec<_> = (0..3).map(|i| ImageTensor::filled([i as f32 * 0.1; 3])).collect();
        let a = classify(&backend, &head, &images).unwrap();
        let b = classify(&backend, &head, &images).unwrap();
        assert_eq!(a.dim(), (3, NUM_CLASSES));
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let backend = stub_backend(7, 16, 2).unwrap();
        let head = build_head(HeadConfig::for_embed_dim(32), 7).unwrap();
        let images = [ImageTensor::filled([0.0; 3])];
        assert!(matches!(classify(&backend, &head, &images), Err(Error::Shape { .. })));
    }
}
