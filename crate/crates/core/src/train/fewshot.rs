//! Head-only fine-tuning on a small labelled subset.
//!
//! The encoder never enters the optimizer. Its embeddings of the subset are
//! computed once, without augmentation, and the head is trained on them with
//! plain binary cross-entropy.

use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::data::dataset::ImageDataset;
use crate::error::{Error, Result};
use crate::labels::NUM_CLASSES;
use crate::model::backend::EncoderBackend;
use crate::model::checkpoint::Checkpoint;
use crate::model::head::ClassificationHead;
use crate::model::inference::dataset_features;
use crate::seed::rng_for;
use crate::train::loss::{bce_grad, bce_with_logits};
use crate::train::trace::{EpochRecord, TrainingTrace};
use crate::train::{abort, to_device, to_host};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FewShotConfig {
    pub head_lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        Self {
            head_lr: 1e-4,
            weight_decay: 1e-2,
            batch_size: 16,
            epochs: 20,
            seed: crate::seed::DEFAULT_SEED,
        }
    }
}

impl FewShotConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.head_lr > 0.0) {
            out.push("fewshot head_lr must be positive".to_string());
        }
        if !(self.weight_decay >= 0.0) {
            out.push("fewshot weight_decay must be >= 0".to_string());
        }
        if self.batch_size == 0 {
            out.push("fewshot batch_size must be positive".to_string());
        }
        if self.epochs == 0 {
            out.push("fewshot epochs must be positive".to_string());
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct FewShotOutcome {
    pub trace: TrainingTrace,
}

/// Trains `head` in place on the frozen embeddings of `subset`.
pub fn fewshot_finetune_head(
    backend: &dyn EncoderBackend,
    head: &mut ClassificationHead,
    subset: &ImageDataset,
    config: &FewShotConfig,
) -> Result<FewShotOutcome> {
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    if subset.is_empty() {
        return Err(Error::InvalidInput("few-shot subset is empty".into()));
    }
    let n = subset.len();
    let dim = backend.embed_dim();
    let flat: Vec<f32> = dataset_features(backend, subset)?.into_iter().flatten().collect();
    let features = Tensor::from_vec(flat, (n, dim), head.device())?;
    let items = subset.items();
    let targets = Array2::from_shape_fn((n, NUM_CLASSES), |(r, c)| f64::from(items[r].labels[c]));

    let mut opt = AdamW::new(
        head.params().trainable_vars(),
        ParamsAdamW {
            lr: config.head_lr,
            weight_decay: config.weight_decay,
            ..ParamsAdamW::default()
        },
    )?;
    let mut dropout_rng = rng_for(config.seed, "fewshot-dropout");
    let mut trace = TrainingTrace::new("fewshot");
    let mut step = 0;
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(config.seed, &format!("fewshot-shuffle/{epoch}")));
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            step += 1;
            let idx = Tensor::from_vec(batch.iter().map(|&i| i as u32).collect::<Vec<_>>(), batch.len(), head.device())?;
            let x = features.index_select(&idx, 0)?;
            let logits = head.forward(&x, Some(&mut dropout_rng))?;
            let host = to_host(&logits)?;
            if host.iter().any(|v| !v.is_finite()) {
                return Err(abort(epoch, step, "non-finite logits"));
            }
            let t = targets.select(ndarray::Axis(0), batch);
            let loss = bce_with_logits(host.view(), t.view())?;
            let grad = bce_grad(host.view(), t.view())?;
            let grads = (logits * to_device(&grad, &x)?)?.sum_all()?.backward()?;
            opt.step(&grads)?;
            loss_sum += loss * batch.len() as f64;
        }
        trace.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            val_mean_auc: None,
            encoder_lr: 0.0,
            head_lr: config.head_lr,
            wall_time_s: started.elapsed().as_secs_f64(),
        })?;
    }
    Ok(FewShotOutcome { trace })
}

/// Restores `checkpoint`, fine-tunes its head on `subset` and captures the
/// result as a new checkpoint.
pub fn fewshot_finetune(
    checkpoint: &Checkpoint,
    subset: &ImageDataset,
    config: &FewShotConfig,
) -> Result<(Checkpoint, FewShotOutcome)> {
    let (backend, mut head) = checkpoint.restore()?;
    let outcome = fewshot_finetune_head(backend.as_ref(), &mut head, subset, config)?;
    let mut meta = checkpoint.meta.clone();
    meta.stage = "fewshot".into();
    meta.seed = config.seed;
    meta.epoch = config.epochs;
    meta.history.extend(outcome.trace.normalized().epochs.iter().cloned());
    Ok((Checkpoint::capture(backend.as_ref(), &head, meta)?, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{generate, FixtureSpec};
    use crate::data::fewshot::sample_few_shot;
    use crate::data::manifest::Split;
    use crate::model::head::HeadConfig;
    use crate::model::stub::StubBackend;
    use crate::model::stub::StubConfig;

    fn setup() -> (StubBackend, ClassificationHead, ImageDataset) {
        let fixture = generate(&FixtureSpec::default());
        let mut manifest = fixture.manifest.clone();
        for r in manifest.records_mut() {
            r.split = Split::Train;
        }
        let subset = sample_few_shot(&manifest, 16, 7).unwrap();
        let ds = ImageDataset::from_split(&manifest, Split::Train, fixture.source()).select(&subset.record_ids);
        let backend = StubBackend::new(StubConfig::new(7, 16, 2)).unwrap();
        let head = ClassificationHead::new(HeadConfig::for_embed_dim(16), 7, backend.device()).unwrap();
        (backend, head, ds)
    }

    #[test]
    fn head_changes_encoder_does_not_and_loss_falls() {
        let (backend, mut head, ds) = setup();
        let enc = backend.params().digest(|_| true).unwrap();
        let before = head.params().digest(|_| true).unwrap();
        let cfg = FewShotConfig {
            head_lr: 1e-3,
            ..FewShotConfig::default()
        };
        let out = fewshot_finetune_head(&backend, &mut head, &ds, &cfg).unwrap();
        assert_eq!(backend.params().digest(|_| true).unwrap(), enc);
        assert_ne!(head.params().digest(|_| true).unwrap(), before);
        let l = out.trace.losses();
        assert!(l.last().unwrap() < &l[0], "{l:?}");
    }

    #[test]
    fn same_seed_same_head() {
        let (backend, mut a, ds) = setup();
        let (_, mut b, _) = setup();
        let cfg = FewShotConfig {
            epochs: 3,
            ..FewShotConfig::default()
        };
        fewshot_finetune_head(&backend, &mut a, &ds, &cfg).unwrap();
        fewshot_finetune_head(&backend, &mut b, &ds, &cfg).unwrap();
        assert_eq!(a.params().digest(|_| true).unwrap(), b.params().digest(|_| true).unwrap());
    }

    #[test]
    fn empty_subset_fails() {
        let (backend, mut head, ds) = setup();
        let empty = ds.select(&[]);
        assert!(fewshot_finetune_head(&backend, &mut head, &empty, &FewShotConfig::default()).is_err());
    }
}
