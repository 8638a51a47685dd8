//! Central finite-difference gradient checking.

use super::tensor::Tensor;

/// Relative error used by the gradient checks: `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central differences of a scalar function of several tensors, with respect
/// to every entry of every tensor.
pub fn numeric_gradients(
    inputs: &[Tensor<f64>],
    step: f64,
    mut f: impl FnMut(&[Tensor<f64>]) -> f64,
) -> Vec<Tensor<f64>> {
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[i].shape().to_vec());
        for j in 0..inputs[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + step;
            let up = f(&work);
            work[i].data_mut()[j] = orig - step;
            let down = f(&work);
            work[i].data_mut()[j] = orig;
            g.data_mut()[j] = (up - down) / (2.0 * step);
        }
        out.push(g);
    }
    out
}

/// Largest relative error between two gradient lists.
pub fn max_relative_error(analytic: &[Tensor<f64>], numeric: &[Tensor<f64>], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n.data()).map(move |(&x, &y)| relative_error(x, y, floor)))
        .fold(0.0, f64::max)
}
