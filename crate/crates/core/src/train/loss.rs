//! Multi-label losses on logits.
//!
//! Losses are evaluated on the host in `f64`. Each loss has a matching
//! gradient of the mean loss with respect to the logits, which the training
//! loops feed back into the network.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FocalLossParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalLossParams {
    fn default() -> Self {
        Self { alpha: 0.25, gamma: 2.0 }
    }
}

impl FocalLossParams {
    /// The parameters under which focal loss is plain binary cross-entropy.
    pub const BCE: FocalLossParams = FocalLossParams { alpha: 1.0, gamma: 0.0 };

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            out.push(format!("focal alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            out.push(format!("focal gamma must be a finite value >= 0, got {}", self.gamma));
        }
        out
    }
}

fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

fn check(logits: &ArrayView2<f64>, targets: &ArrayView2<f64>) -> Result<()> {
    if logits.dim() != targets.dim() {
        return Err(Error::Shape {
            expected: format!("targets {:?}", logits.dim()),
            actual: format!("{:?}", targets.dim()),
        });
    }
    if logits.is_empty() {
        return Err(Error::InvalidInput("empty loss batch".into()));
    }
    if logits.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidInput("NaN logit".into()));
    }
    if logits.iter().any(|x| x.is_infinite()) {
        return Err(Error::InvalidInput("infinite logit".into()));
    }
    if targets.iter().any(|t| *t != 0.0 && *t != 1.0) {
        return Err(Error::InvalidInput("targets must be 0 or 1".into()));
    }
    Ok(())
}

/// `s = x` for negatives and `-x` for positives, so that
/// `-log p_t = softplus(s)` and `1 - p_t = sigmoid(s)`.
fn signed(x: f64, t: f64) -> f64 {
    x * (1.0 - 2.0 * t)
}

fn focal_term(x: f64, t: f64, p: FocalLossParams) -> f64 {
    let s = signed(x, t);
    p.alpha * sigmoid(s).powf(p.gamma) * softplus(s)
}

fn focal_term_grad(x: f64, t: f64, p: FocalLossParams) -> f64 {
    let s = signed(x, t);
    let q = sigmoid(s);
    let ds = p.alpha * q.powf(p.gamma) * (p.gamma * (1.0 - q) * softplus(s) + q);
    ds * (1.0 - 2.0 * t)
}

/// Mean focal loss over every `(row, class)` entry.
pub fn focal_bce_with_logits(logits: ArrayView2<f64>, targets: ArrayView2<f64>, params: FocalLossParams) -> Result<f64> {
    check(&logits, &targets)?;
    let sum: f64 = Zip::from(&logits)
        .and(&targets)
        .fold(0.0, |acc, &x, &t| acc + focal_term(x, t, params));
    Ok(sum / logits.len() as f64)
}

/// Gradient of [`focal_bce_with_logits`] with respect to each logit.
pub fn focal_bce_grad(logits: ArrayView2<f64>, targets: ArrayView2<f64>, params: FocalLossParams) -> Result<Array2<f64>> {
    check(&logits, &targets)?;
    let n = logits.len() as f64;
    Ok(Zip::from(&logits)
        .and(&targets)
        .map_collect(|&x, &t| focal_term_grad(x, t, params) / n))
}

/// Mean binary cross-entropy on logits.
pub fn bce_with_logits(logits: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64> {
    check(&logits, &targets)?;
    let sum: f64 = Zip::from(&logits)
        .and(&targets)
        .fold(0.0, |acc, &x, &t| acc + x.max(0.0) - x * t + (-x.abs()).exp().ln_1p());
    Ok(sum / logits.len() as f64)
}

/// Gradient of [`bce_with_logits`]: `(sigmoid(x) - t) / len`.
pub fn bce_grad(logits: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<Array2<f64>> {
    check(&logits, &targets)?;
    let n = logits.len() as f64;
    Ok(Zip::from(&logits)
        .and(&targets)
        .map_collect(|&x, &t| (sigmoid(x) - t) / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn spot_values() {
        let l = array![[0.0]];
        let one = array![[1.0]];
        let zero = array![[0.0]];
        let f = focal_bce_with_logits(l.view(), one.view(), FocalLossParams::default()).unwrap();
        assert_abs_diff_eq!(f, 0.25 * 0.25 * 2f64.ln(), epsilon = 1e-15);
        for t in [&one, &zero] {
            let f = focal_bce_with_logits(l.view(), t.view(), FocalLossParams::BCE).unwrap();
            assert_abs_diff_eq!(f, 2f64.ln(), epsilon = 1e-15);
            assert_abs_diff_eq!(bce_with_logits(l.view(), t.view()).unwrap(), 2f64.ln(), epsilon = 1e-15);
        }
        let big = array![[40.0]];
        assert!(focal_bce_with_logits(big.view(), one.view(), FocalLossParams::default()).unwrap() < 1e-12);
        assert!(bce_with_logits((-&big).view(), zero.view()).unwrap() < 1e-12);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let l = array![[80.0, -80.0, 500.0, -500.0]];
        let t = array![[0.0, 1.0, 0.0, 1.0]];
        let f = focal_bce_with_logits(l.view(), t.view(), FocalLossParams::default()).unwrap();
        assert!(f.is_finite() && f > 0.0);
        assert!(focal_bce_grad(l.view(), t.view(), FocalLossParams::default())
            .unwrap()
            .iter()
            .all(|g| g.is_finite()));
    }

    #[test]
    fn errors() {
        let l = array![[0.0, 1.0]];
        let t = array![[0.0]];
        assert!(matches!(bce_with_logits(l.view(), t.view()), Err(Error::Shape { .. })));
        let nan = array![[f64::NAN]];
        assert!(focal_bce_with_logits(nan.view(), t.view(), FocalLossParams::default()).is_err());
        let bad = array![[0.5, 1.0]];
        assert!(bce_with_logits(l.view(), bad.view()).is_err());
    }

    #[test]
    fn bce_gradient_is_sigmoid_minus_target() {
        let l = array![[0.0, 2.0]];
        let t = array![[1.0, 0.0]];
        let g = bce_grad(l.view(), t.view()).unwrap();
        assert_abs_diff_eq!(g[[0, 0]], -0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(g[[0, 1]], (1.0 / (1.0 + (-2f64).exp())) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn parameter_validation() {
        assert!(FocalLossParams::default().problems().is_empty());
        assert_eq!(FocalLossParams { alpha: 0.0, gamma: -1.0 }.problems().len(), 2);
    }

    proptest::proptest! {
        #[test]
        fn loss_ignores_row_order(
            rows in proptest::collection::vec(
                (proptest::collection::vec(-20.0f64..20.0, 3), proptest::collection::vec(0u8..2, 3)),
                2..12,
            ),
            rotate in 0usize..12,
        ) {
            let build = |rows: &[(Vec<f64>, Vec<u8>)]| {
                let x = Array2::from_shape_fn((rows.len(), 3), |(i, j)| rows[i].0[j]);
                let t = Array2::from_shape_fn((rows.len(), 3), |(i, j)| f64::from(rows[i].1[j]));
                focal_bce_with_logits(x.view(), t.view(), FocalLossParams::default()).unwrap()
            };
            let mut moved = rows.clone();
            moved.rotate_left(rotate % rows.len());
            moved.reverse();
            proptest::prop_assert!((build(&rows) - build(&moved)).abs() < 1e-12);
        }
    }
}
