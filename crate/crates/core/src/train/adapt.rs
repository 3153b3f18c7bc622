//! Partial fine-tuning of the visual encoder together with the head.

use std::time::Instant;

use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::augment::AugmentationSpec;
use crate::data::dataset::ImageDataset;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::backend::{images_to_tensor, EncoderBackend};
use crate::model::head::ClassificationHead;
use crate::model::inference::score_with_head;
use crate::seed::rng_for;
use crate::train::clip::clip_gradients;
use crate::train::loss::{focal_bce_grad, focal_bce_with_logits, FocalLossParams};
use crate::train::scheduler::{PlateauConfig, PlateauScheduler};
use crate::train::trace::{EpochRecord, TrainingTrace};
use crate::train::{abort, to_device, to_host};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationConfig {
    pub encoder_lr: f64,
    pub head_lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub grad_clip_max_norm: f64,
    pub scheduler: PlateauConfig,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub focal: FocalLossParams,
    pub augmentation: AugmentationSpec,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            encoder_lr: 1e-5,
            head_lr: 1e-4,
            weight_decay: 1e-2,
            batch_size: 32,
            grad_clip_max_norm: 1.0,
            scheduler: PlateauConfig::default(),
            max_epochs: 30,
            early_stop_patience: 5,
            seed: crate::seed::DEFAULT_SEED,
            focal: FocalLossParams::default(),
            augmentation: AugmentationSpec::default(),
        }
    }
}

impl AdaptationConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.encoder_lr > 0.0) || !(self.head_lr > 0.0) {
            out.push("adaptation learning rates must be positive".to_string());
        } else if self.encoder_lr >= self.head_lr {
            out.push(format!(
                "adaptation encoder_lr ({}) must be below head_lr ({})",
                self.encoder_lr, self.head_lr
            ));
        }
        if !(self.weight_decay >= 0.0) {
            out.push("adaptation weight_decay must be >= 0".to_string());
        }
        if self.batch_size == 0 {
            out.push("adaptation batch_size must be positive".to_string());
        }
        if !(self.grad_clip_max_norm > 0.0) {
            out.push("adaptation grad_clip_max_norm must be positive".to_string());
        }
        if self.max_epochs == 0 {
            out.push("adaptation max_epochs must be positive".to_string());
        }
        if self.scheduler.patience == 0 || !(self.scheduler.factor > 0.0 && self.scheduler.factor < 1.0) {
            out.push("adaptation scheduler needs patience >= 1 and factor in (0, 1)".to_string());
        }
        out.extend(self.focal.problems());
        if let Err(Error::Config(p)) = self.augmentation.validate() {
            out.extend(p);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub trace: TrainingTrace,
    pub best_epoch: usize,
    pub best_val_auc: f64,
    pub stopped_early: bool,
}

fn targets_of(dataset: &ImageDataset, indices: &[usize]) -> Array2<f64> {
    let items = dataset.items();
    Array2::from_shape_fn((indices.len(), crate::labels::NUM_CLASSES), |(r, c)| {
        f64::from(items[indices[r]].labels[c])
    })
}

/// Trains the unfrozen encoder parameters and the head, leaving both at the
/// epoch with the best validation mean AUC.
pub fn adapt(
    backend: &mut dyn EncoderBackend,
    head: &mut ClassificationHead,
    train: &ImageDataset,
    val: &ImageDataset,
    config: &AdaptationConfig,
) -> Result<AdaptOutcome> {
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    if train.is_empty() {
        return Err(Error::InvalidInput("adaptation train set is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::InvalidInput("adaptation validation set is empty".into()));
    }
    let encoder_vars = backend.params().trainable_vars();
    let head_vars = head.params().trainable_vars();
    let mut all_vars = encoder_vars.clone();
    all_vars.extend(head_vars.iter().cloned());
    let opt_params = |lr| ParamsAdamW {
        lr,
        weight_decay: config.weight_decay,
        ..ParamsAdamW::default()
    };
    let mut encoder_opt = AdamW::new(encoder_vars, opt_params(config.encoder_lr))?;
    let mut head_opt = AdamW::new(head_vars, opt_params(config.head_lr))?;
    let mut scheduler = PlateauScheduler::new(config.scheduler, vec![config.encoder_lr, config.head_lr]);

    let trainable_snapshot = |backend: &dyn EncoderBackend, head: &ClassificationHead| -> Result<_> {
        Ok((backend.params().snapshot(|p| p.trainable)?, head.params().snapshot(|_| true)?))
    };
    let mut best = trainable_snapshot(backend, head)?;
    let mut best_epoch = 0;
    let mut best_auc = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut trace = TrainingTrace::new("adapt");
    let mut step = 0usize;

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let (encoder_lr, head_lr) = (scheduler.lrs()[0], scheduler.lrs()[1]);
        encoder_opt.set_learning_rate(encoder_lr);
        head_opt.set_learning_rate(head_lr);

        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng_for(config.seed, &format!("adapt-shuffle/{epoch}")));
        let mut dropout_rng = rng_for(config.seed, &format!("adapt-dropout/{epoch}"));
        let mut loss_sum = 0.0;

        for batch in order.chunks(config.batch_size) {
            step += 1;
            let images = train.load_batch(batch, Some((&config.augmentation, config.seed, epoch)))?;
            let pixels = images_to_tensor(&images, backend.device())?;
            let features = backend.forward(&pixels)?;
            let logits = head.forward(&features, Some(&mut dropout_rng))?;
            let host = to_host(&logits)?;
            if host.iter().any(|x| !x.is_finite()) {
                return Err(abort(epoch, step, "non-finite logits"));
            }
            let targets = targets_of(train, batch);
            let loss = focal_bce_with_logits(host.view(), targets.view(), config.focal)?;
            if !loss.is_finite() {
                return Err(abort(epoch, step, format!("non-finite loss {loss}")));
            }
            let grad = focal_bce_grad(host.view(), targets.view(), config.focal)?;
            let surrogate = (logits * to_device(&grad, &features)?)?.sum_all()?;
            let mut grads = surrogate.backward()?;
            clip_gradients(&mut grads, &all_vars, config.grad_clip_max_norm)?;
            encoder_opt.step(&grads)?;
            head_opt.step(&grads)?;
            loss_sum += loss * batch.len() as f64;
        }

        let report = evaluate(&score_with_head(backend, head, val)?)?;
        let val_auc = report.mean_auc;
        trace.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_mean_auc: Some(val_auc),
            encoder_lr,
            head_lr,
            wall_time_s: started.elapsed().as_secs_f64(),
        })?;
        log::info!("adapt epoch {epoch}: loss {:.5} val auc {val_auc:.4}", loss_sum / train.len() as f64);

        if val_auc > best_auc {
            best_auc = val_auc;
            best_epoch = epoch;
            best = trainable_snapshot(backend, head)?;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if scheduler.step(val_auc) {
            log::info!("plateau: learning rates now {:?}", scheduler.lrs());
        }
        if since_best >= config.early_stop_patience {
            stopped_early = true;
            break;
        }
    }

    backend.params().restore(&best.0)?;
    head.params().restore(&best.1)?;
    Ok(AdaptOutcome {
        trace,
        best_epoch,
        best_val_auc: best_auc,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::image::{InMemorySource, RawImage};
    use crate::labels::LabelVector;
    use crate::model::freeze::{apply_freeze_policy, FreezePolicy};
    use crate::model::head::HeadConfig;
    use crate::model::stub::{StubBackend, StubConfig};
    use std::sync::Arc;

    /// Two visually separable groups: bright left half for class 0, bright
    /// right half for class 1.
    fn toy(n: usize, offset: usize, source: &mut InMemorySource) -> Vec<(String, LabelVector)> {
        (0..n)
            .map(|i| {
                let id = format!("toy{}", i + offset);
                let class = i % 2;
                let mut data = vec![0.1; 64 * 64];
                for y in 0..64 {
                    for x in 0..32 {
                        let xx = if class == 0 { x } else { x + 32 };
                        data[y * 64 + xx] = 0.8 + 0.01 * (i % 5) as f32;
                    }
                }
                source.insert(&id, RawImage::gray(64, 64, data).unwrap());
                let mut labels = [0u8; 14];
                labels[class] = 1;
                (id, labels)
            })
            .collect()
    }

    fn setup(policy: FreezePolicy) -> (StubBackend, ClassificationHead, ImageDataset, ImageDataset) {
        let mut source = InMemorySource::default();
        let tr = toy(24, 0, &mut source);
        let va = toy(8, 100, &mut source);
        let source = Arc::new(source);
        let mut backend = StubBackend::new(StubConfig::new(7, 16, 3)).unwrap();
        apply_freeze_policy(&mut backend, &policy).unwrap();
        let head = ClassificationHead::new(HeadConfig::for_embed_dim(16), 7, backend.device()).unwrap();
        (
            backend,
            head,
            ImageDataset::from_ids(tr, source.clone()),
            ImageDataset::from_ids(va, source),
        )
    }

    #[test]
    fn separable_toy_set_learns() {
        let (mut b, mut h, tr, va) = setup(FreezePolicy::default());
        let cfg = AdaptationConfig {
            head_lr: 1e-3,
            encoder_lr: 1e-4,
            batch_size: 8,
            max_epochs: 10,
            early_stop_patience: 10,
            augmentation: AugmentationSpec::disabled(),
            ..AdaptationConfig::default()
        };
        let out = adapt(&mut b, &mut h, &tr, &va, &cfg).unwrap();
        let losses = out.trace.losses();
        assert_eq!(losses.len(), 10);
        assert!(losses[9] < losses[0], "{losses:?}");
        assert!(out.best_val_auc > 0.9, "{}", out.best_val_auc);
    }

    #[test]
    fn frozen_groups_do_not_move() {
        let (mut b, mut h, tr, va) = setup(FreezePolicy {
            k_top_blocks: 1,
            unfreeze_post_norm_and_projection: false,
        });
        let frozen = b.params().digest(|p| !p.trainable).unwrap();
        let trainable = b.params().digest(|p| p.trainable).unwrap();
        let cfg = AdaptationConfig {
            max_epochs: 2,
            batch_size: 8,
            encoder_lr: 1e-3,
            head_lr: 1e-2,
            ..AdaptationConfig::default()
        };
        adapt(&mut b, &mut h, &tr, &va, &cfg).unwrap();
        assert_eq!(b.params().digest(|p| !p.trainable).unwrap(), frozen);
        assert_ne!(b.params().digest(|p| p.trainable).unwrap(), trainable);
    }

    #[test]
    fn stagnation_halves_both_rates_once() {
        let (mut b, mut h, tr, va) = setup(FreezePolicy::default());
        // rates far below f32 resolution leave every weight unchanged
        let cfg = AdaptationConfig {
            encoder_lr: 1e-14,
            head_lr: 1e-13,
            max_epochs: 4,
            batch_size: 12,
            scheduler: PlateauConfig {
                min_lr: 0.0,
                ..PlateauConfig::default()
            },
            ..AdaptationConfig::default()
        };
        let out = adapt(&mut b, &mut h, &tr, &va, &cfg).unwrap();
        let enc: Vec<f64> = out.trace.epochs.iter().map(|r| r.encoder_lr).collect();
        let head: Vec<f64> = out.trace.epochs.iter().map(|r| r.head_lr).collect();
        assert_eq!(enc, vec![1e-14, 1e-14, 1e-14, 0.5e-14]);
        assert_eq!(head, vec![1e-13, 1e-13, 1e-13, 0.5e-13]);
    }

    #[test]
    fn empty_train_set_and_bad_rates_fail() {
        let (mut b, mut h, tr, va) = setup(FreezePolicy::default());
        let empty = tr.select(&[]);
        assert!(adapt(&mut b, &mut h, &empty, &va, &AdaptationConfig::default()).is_err());
        let inverted = AdaptationConfig {
            encoder_lr: 1e-3,
            head_lr: 1e-4,
            ..AdaptationConfig::default()
        };
        assert!(matches!(adapt(&mut b, &mut h, &tr, &va, &inverted), Err(Error::Config(_))));
    }
}
