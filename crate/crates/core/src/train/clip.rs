//! Global-norm gradient clipping.

use candle_core::backprop::GradStore;
use candle_core::{DType, Var};

use crate::error::Result;

/// Global L2 norm of the gradients held for `vars`.
pub fn global_grad_norm(grads: &GradStore, vars: &[Var]) -> Result<f64> {
    let mut sq = 0.0f64;
    for v in vars {
        if let Some(g) = grads.get(v) {
            sq += g.to_dtype(DType::F64)?.sqr()?.sum_all()?.to_scalar::<f64>()?;
        }
    }
    Ok(sq.sqrt())
}

/// Rescales every gradient by `max_norm / g` when the global norm `g`
/// exceeds `max_norm`. Returns the factor applied (1.0 when untouched).
pub fn clip_gradients(grads: &mut GradStore, vars: &[Var], max_norm: f64) -> Result<f64> {
    let norm = global_grad_norm(grads, vars)?;
    if !(norm > max_norm) {
        return Ok(1.0);
    }
    let factor = max_norm / norm;
    for v in vars {
        if let Some(g) = grads.get(v) {
            let scaled = g.affine(factor, 0.0)?;
            grads.insert(v, scaled);
        }
    }
    Ok(factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{Device, Tensor};

    /// Gradients of `sum(v * c)` are exactly `c`.
    fn grads_equal_to(values: &[Vec<f32>]) -> (GradStore, Vec<Var>) {
        let dev = Device::Cpu;
        let vars: Vec<Var> = values.iter().map(|v| Var::zeros(v.len(), DType::F32, &dev).unwrap()).collect();
        let mut total = Tensor::zeros((), DType::F32, &dev).unwrap();
        for (var, c) in vars.iter().zip(values) {
            let c = Tensor::new(c.as_slice(), &dev).unwrap();
            total = (total + (var.as_tensor() * c).unwrap().sum_all().unwrap()).unwrap();
        }
        (total.backward().unwrap(), vars)
    }

    #[test]
    fn under_threshold_is_untouched() {
        let (mut g, vars) = grads_equal_to(&[vec![0.3], vec![0.4]]);
        let before = g.get(&vars[0]).unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(clip_gradients(&mut g, &vars, 1.0).unwrap(), 1.0);
        assert_eq!(g.get(&vars[0]).unwrap().to_vec1::<f32>().unwrap(), before);
    }

    #[test]
    fn four_times_threshold_scales_by_quarter() {
        let (mut g, vars) = grads_equal_to(&[vec![2.4, 0.0], vec![3.2]]);
        assert!((global_grad_norm(&g, &vars).unwrap() - 4.0).abs() < 1e-6);
        let f = clip_gradients(&mut g, &vars, 1.0).unwrap();
        assert!((f - 0.25).abs() < 1e-7);
        assert!((global_grad_norm(&g, &vars).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_gradients() {
        let (mut g, vars) = grads_equal_to(&[vec![0.0, 0.0]]);
        assert_eq!(clip_gradients(&mut g, &vars, 1.0).unwrap(), 1.0);
    }
}
