//! Losses, gradient clipping, learning-rate scheduling and the two training
//! loops: encoder adaptation and head-only few-shot fine-tuning.

pub mod adapt;
pub mod clip;
pub mod fewshot;
pub mod loss;
pub mod scheduler;
pub mod trace;

use candle_core::{DType, Tensor};
use ndarray::Array2;

use crate::error::{Error, Result};

pub use adapt::{adapt, AdaptOutcome, AdaptationConfig};
pub use clip::{clip_gradients, global_grad_norm};
pub use fewshot::{fewshot_finetune, fewshot_finetune_head, FewShotConfig, FewShotOutcome};
pub use loss::{bce_with_logits, focal_bce_with_logits, FocalLossParams};
pub use scheduler::{PlateauConfig, PlateauScheduler};
pub use trace::{EpochRecord, TrainingTrace};

pub(crate) fn to_host(logits: &Tensor) -> Result<Array2<f64>> {
    let (b, c) = logits.dims2()?;
    let v: Vec<f32> = logits.to_dtype(DType::F32)?.flatten_all()?.to_vec1()?;
    Ok(Array2::from_shape_vec((b, c), v.into_iter().map(f64::from).collect()).expect("dims2 shape"))
}

pub(crate) fn to_device(a: &Array2<f64>, like: &Tensor) -> Result<Tensor> {
    let v: Vec<f32> = a.iter().map(|x| *x as f32).collect();
    Ok(Tensor::from_vec(v, a.dim(), like.device())?)
}

pub(crate) fn abort(epoch: usize, step: usize, message: impl Into<String>) -> Error {
    Error::TrainingAborted {
        epoch,
        step,
        message: message.into(),
    }
}
