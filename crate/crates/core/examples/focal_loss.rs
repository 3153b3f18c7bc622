// Focal and plain binary cross-entropy on a small batch of logits.

use ndarray::array;
use xrayclip::train::loss::{bce_with_logits, focal_bce_grad, focal_bce_with_logits, FocalLossParams};

pub fn run_example() -> xrayclip::Result<f64> {
    let logits = array![[0.0, 3.0, -2.0], [1.5, -0.5, 6.0]];
    let targets = array![[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]];
    let focal = FocalLossParams::default();

    let fl = focal_bce_with_logits(logits.view(), targets.view(), focal)?;
    let bce = bce_with_logits(logits.view(), targets.view())?;
    let reduced = focal_bce_with_logits(logits.view(), targets.view(), FocalLossParams::BCE)?;
    println!("focal (alpha {}, gamma {}): {fl:.6}", focal.alpha, focal.gamma);
    println!("bce: {bce:.6}   focal with alpha 1, gamma 0: {reduced:.6}");

    let grad = focal_bce_grad(logits.view(), targets.view(), focal)?;
    println!("d loss / d logits:\n{grad:.5}");

    let single = focal_bce_with_logits(array![[0.0]].view(), array![[1.0]].view(), focal)?;
    println!("logit 0, target 1: {single:.7}");
    Ok(single)
}

#[allow(dead_code)]
fn main() {
    run_example().expect("focal loss example failed");
}
