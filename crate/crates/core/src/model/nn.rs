//! Differentiable building blocks composed from primitive tensor ops.

use candle_core::{DType, Device, Tensor, D};
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::seed::Rng;

/// `x W^T + b` for `x` of shape `(.., in)` and `W` of shape `(out, in)`.
pub fn linear(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let y = match x.dims() {
        [batch, _, _] => x.matmul(&weight.broadcast_left(*batch)?.t()?)?,
        _ => x.matmul(&weight.t()?)?,
    };
    Ok(match bias {
        Some(b) => y.broadcast_add(b)?,
        None => y,
    })
}

pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    let normed = centered.broadcast_div(&(var + eps)?.sqrt()?)?;
    Ok(normed.broadcast_mul(gamma)?.broadcast_add(beta)?)
}

/// `x * sigmoid(1.702 x)`, the activation of the pretrained vision-language
/// transformers.
pub fn quick_gelu(x: &Tensor) -> Result<Tensor> {
    let gate = ((x * -1.702)?.exp()? + 1.0)?.recip()?;
    Ok((x * gate)?)
}

/// Softmax over the last dimension.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?;
    let e = x.broadcast_sub(&max)?.exp()?;
    let s = e.sum_keepdim(D::Minus1)?;
    Ok(e.broadcast_div(&s)?)
}

/// Inverted dropout with a host-generated mask.
pub fn dropout(x: &Tensor, p: f64, rng: &mut Rng) -> Result<Tensor> {
    if p <= 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - p;
    let n = x.elem_count();
    let scale = (1.0 / keep) as f32;
    let mask: Vec<f32> = (0..n)
        .map(|_| {
            if rand::Rng::gen::<f64>(rng) < keep {
                scale
            } else {
                0.0
            }
        })
        .collect();
    let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
    Ok((x * mask)?)
}

/// Kaiming-normal (fan-in, ReLU gain) weights for an `(out, in)` matrix.
pub fn kaiming_normal(out_dim: usize, in_dim: usize, rng: &mut Rng, device: &Device) -> Result<Tensor> {
    let std = (2.0 / in_dim as f64).sqrt();
    gaussian(&[out_dim, in_dim], std, rng, device)
}

pub fn gaussian(shape: &[usize], std: f64, rng: &mut Rng, device: &Device) -> Result<Tensor> {
    let normal = Normal::new(0.0, std).expect("std is finite and positive");
    let n: usize = shape.iter().product();
    let values: Vec<f32> = (0..n).map(|_| normal.sample(rng) as f32).collect();
    Ok(Tensor::from_vec(values, shape, device)?)
}

pub fn zeros(shape: &[usize], device: &Device) -> Result<Tensor> {
    Ok(Tensor::zeros(shape, DType::F32, device)?)
}

pub fn ones(shape: &[usize], device: &Device) -> Result<Tensor> {
    Ok(Tensor::ones(shape, DType::F32, device)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn layer_norm_matches_hand_computation() {
        let dev = Device::Cpu;
        let x = Tensor::new(&[[1f32, 2.0, 3.0, 6.0]], &dev).unwrap();
        let y = layer_norm(&x, &ones(&[4], &dev).unwrap(), &zeros(&[4], &dev).unwrap(), 0.0)
            .unwrap()
            .to_vec2::<f32>()
            .unwrap();
        let mean = 3.0f32;
        let sd = ((4.0 + 1.0 + 0.0 + 9.0) / 4.0f32).sqrt();
        for (v, x) in y[0].iter().zip([1f32, 2.0, 3.0, 6.0]) {
            assert!((v - (x - mean) / sd).abs() < 1e-6);
        }
    }

    #[test]
    fn layer_norm_is_differentiable() {
        let dev = Device::Cpu;
        let g = candle_core::Var::ones(3, DType::F32, &dev).unwrap();
        let x = Tensor::new(&[[0.5f32, -1.0, 2.0]], &dev).unwrap();
        let y = layer_norm(&x, g.as_tensor(), &zeros(&[3], &dev).unwrap(), 1e-5).unwrap();
        let grads = y.sqr().unwrap().sum_all().unwrap().backward().unwrap();
        assert!(grads.get(g.as_tensor()).is_some());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let dev = Device::Cpu;
        let x = Tensor::new(&[[1f32, 2.0, 3.0], [100.0, 100.0, 100.0]], &dev).unwrap();
        for row in softmax_last(&x).unwrap().to_vec2::<f32>().unwrap() {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn dropout_keeps_expectation_and_zero_rate_is_identity() {
        let dev = Device::Cpu;
        let x = ones(&[1, 20_000], &dev).unwrap();
        let mut rng = Rng::seed_from_u64(1);
        let y = dropout(&x, 0.3, &mut rng).unwrap();
        let mean = y.mean_all().unwrap().to_scalar::<f32>().unwrap();
        assert!((mean - 1.0).abs() < 0.03, "{mean}");
        let same = dropout(&x, 0.0, &mut rng).unwrap();
        assert_eq!(same.to_vec2::<f32>().unwrap(), x.to_vec2::<f32>().unwrap());
    }

    #[test]
    fn kaiming_std_follows_fan_in() {
        let mut rng = Rng::seed_from_u64(3);
        let w = kaiming_normal(256, 512, &mut rng, &Device::Cpu).unwrap();
        let v: Vec<f32> = w.flatten_all().unwrap().to_vec1().unwrap();
        let var = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>() / v.len() as f64;
        assert!((var - 2.0 / 512.0).abs() / (2.0 / 512.0) < 0.05);
    }
}
