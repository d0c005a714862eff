//! Central finite-difference gradient checking.

use crate::error::Result;
use crate::nn::tensor::Tensor;

/// Largest relative error between the analytic gradient of `loss_fn` with
/// respect to `param` and a central finite difference with step `h`.
///
/// Relative error is |a - n| / max(|a|, |n|, 1e-4). `loss_fn` is re-invoked
/// for the analytic pass and twice per perturbed element, so keep the graph
/// small.
pub fn max_rel_error(
    param: &Tensor,
    mut loss_fn: impl FnMut() -> Result<Tensor>,
    h: f64,
) -> Result<f64> {
    param.zero_grad();
    let loss = loss_fn()?;
    loss.backward()?;
    let analytic = param
        .grad()
        .unwrap_or_else(|| vec![0.0; param.numel()]);
    let base = param.to_vec();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += h;
        param.set_data(plus);
        let lp = loss_fn()?.item();
        let mut minus = base.clone();
        minus[i] -= h;
        param.set_data(minus);
        let lm = loss_fn()?.item();
        let numeric = (lp - lm) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
        worst = worst.max(rel);
    }
    param.set_data(base);
    param.zero_grad();
    Ok(worst)
}
