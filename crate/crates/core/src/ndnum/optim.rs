use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment buffers, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: f64,
    config: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Contract(format!(
            "adam: {} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(config.beta1), T::lit(config.beta2));
    let bc1 = T::lit(1.0 - config.beta1.powi(t));
    let bc2 = T::lit(1.0 - config.beta2.powi(t));
    let (lr, eps) = (T::lit(lr), T::lit(config.eps));
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].shape() != p.shape() {
            return Err(Error::shape("adam_step", p.shape(), g.shape()));
        }
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = b1 * m[j] + (T::one() - b1) * gj;
            v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
            let mhat = m[j] / bc1;
            let vhat = v[j] / bc2;
            *w -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Linear warmup followed by cosine decay to zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineSchedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl CosineSchedule {
    pub fn new(base_lr: f64, warmup_ratio: f64, total_steps: u64) -> Self {
        let warmup_steps = ((warmup_ratio * total_steps as f64).round() as u64).min(total_steps);
        Self {
            base_lr,
            warmup_steps,
            total_steps,
        }
    }

    /// Learning rate for zero-based optimizer step `step`.
    pub fn lr(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.base_lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let decay = self.total_steps.saturating_sub(self.warmup_steps).max(1);
        let progress = ((step - self.warmup_steps) as f64 / decay as f64).min(1.0);
        0.5 * self.base_lr * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![Tensor::<f64>::from_f64(vec![1], &[1.0]).unwrap()];
        let g = vec![Tensor::<f64>::from_f64(vec![1], &[0.37]).unwrap()];
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, 0.01, &AdamConfig::default()).unwrap();
        let expect = 1.0 - 0.01 * 0.37 / (0.37 + 1e-8);
        assert!((p[0].data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = vec![Tensor::<f64>::from_f64(vec![2], &[1.5, -2.0]).unwrap()];
        let g = vec![Tensor::zeros(vec![2])];
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, 0.1, &AdamConfig::default()).unwrap();
        assert_eq!(p[0].data(), &[1.5, -2.0]);
    }

    /// Scalar recurrence run directly, independent of the tensor path.
    fn scalar_adam_quadratic(steps: usize, lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut p, mut m, mut v) = (0.0f64, 0.0, 0.0);
        for t in 1..=steps {
            let g = 2.0 * (p - 3.0);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            p -= lr * mh / (vh.sqrt() + eps);
        }
        p
    }

    #[test]
    fn quadratic_converges() {
        let oracle = scalar_adam_quadratic(200, 0.1);
        assert!((oracle - 3.0).abs() < 0.05, "oracle {oracle}");
        let mut p = vec![Tensor::<f64>::from_f64(vec![1], &[0.0]).unwrap()];
        let mut st = AdamState::new(&p);
        for _ in 0..200 {
            let x = p[0].data()[0];
            let g = vec![Tensor::<f64>::from_f64(vec![1], &[2.0 * (x - 3.0)]).unwrap()];
            adam_step(&mut p, &g, &mut st, 0.1, &AdamConfig::default()).unwrap();
        }
        assert!((p[0].data()[0] - oracle).abs() < 1e-12);
    }

    #[test]
    fn cosine_warmup_shape() {
        let s = CosineSchedule::new(2e-4, 0.05, 1000);
        assert_eq!(s.warmup_steps, 50);
        assert!((s.lr(0) - 2e-4 / 50.0).abs() < 1e-18);
        assert!((s.lr(49) - 2e-4).abs() < 1e-18);
        assert!((s.lr(50) - 2e-4).abs() < 1e-18);
        assert!(s.lr(999) < 1e-8);
        assert!(s.lr(500) < s.lr(200));
    }
}
