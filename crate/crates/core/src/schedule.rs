//! Noise-level mathematics for the latent diffusion process: σ sampling, loss
//! weighting, preconditioning coefficients, the sampling ladder and the
//! second-order reverse step.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndnum::Tensor;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub sigma_data: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub rho: f64,
    pub steps: usize,
    pub ln_sigma_mean: f64,
    pub ln_sigma_std: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            sigma_data: 0.5,
            sigma_max: 80.0,
            sigma_min: 0.002,
            rho: 7.0,
            steps: 50,
            ln_sigma_mean: -1.2,
            ln_sigma_std: 1.2,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma_min > 0.0
            && self.sigma_min < self.sigma_max
            && self.steps >= 1
            && self.sigma_data > 0.0
            && self.ln_sigma_std > 0.0
            && self.rho > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid schedule config {self:?}")))
        }
    }
}

/// Skip/output/input scalings and the network's noise conditioning value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreconditionCoeffs<T> {
    pub c_skip: T,
    pub c_out: T,
    pub c_in: T,
    pub c_noise: T,
}

fn positive<T: Scalar>(sigma: T, what: &str) -> Result<()> {
    if sigma > T::zero() && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} needs σ > 0, got {sigma}")))
    }
}

/// Draws σ from the log-normal training distribution.
pub fn sample_sigma<T: Scalar, R: Rng + ?Sized>(rng: &mut R, config: &ScheduleConfig) -> T {
    let g: f64 = rng.sample(StandardNormal);
    T::lit((config.ln_sigma_mean + config.ln_sigma_std * g).exp())
}

/// λ(σ) = (σ² + σ_d²) / (σ σ_d)².
pub fn loss_weight<T: Scalar>(sigma: T, config: &ScheduleConfig) -> Result<T> {
    positive(sigma, "loss_weight")?;
    let sd = T::lit(config.sigma_data);
    Ok((sigma * sigma + sd * sd) / ((sigma * sd) * (sigma * sd)))
}

pub fn precondition<T: Scalar>(sigma: T, config: &ScheduleConfig) -> Result<PreconditionCoeffs<T>> {
    positive(sigma, "precondition")?;
    let sd = T::lit(config.sigma_data);
    let total = sigma * sigma + sd * sd;
    Ok(PreconditionCoeffs {
        c_skip: sd * sd / total,
        c_out: sigma * sd / total.sqrt(),
        c_in: total.sqrt().recip(),
        c_noise: sigma.ln() / T::lit(4.0),
    })
}

/// Noise levels `σ_0 > … > σ_{steps-1}` followed by a final exact zero.
pub fn sigma_ladder<T: Scalar>(config: &ScheduleConfig) -> Result<Vec<T>> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.steps + 1);
    if config.steps == 1 {
        out.push(T::lit(config.sigma_max));
    } else {
        let inv = 1.0 / config.rho;
        let hi = config.sigma_max.powf(inv);
        let lo = config.sigma_min.powf(inv);
        for i in 0..config.steps {
            let frac = i as f64 / (config.steps - 1) as f64;
            out.push(T::lit((hi + frac * (lo - hi)).powf(config.rho)));
        }
    }
    out.push(T::zero());
    Ok(out)
}

/// `Z + σ·E` with i.i.d. standard normal `E`.
pub fn add_noise<T: Scalar, R: Rng + ?Sized>(z: &Tensor<T>, sigma: T, rng: &mut R) -> Tensor<T> {
    let mut out = z.clone();
    for v in out.data_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += sigma * T::lit(e);
    }
    out
}

/// One Euler step with a trapezoidal correction, skipped when `sigma_next = 0`.
pub fn heun_step<T, F>(denoise: &mut F, z: &Tensor<T>, sigma_cur: T, sigma_next: T) -> Result<Tensor<T>>
where
    T: Scalar,
    F: FnMut(&Tensor<T>, T) -> Result<Tensor<T>>,
{
    if !(sigma_cur > sigma_next) || sigma_next < T::zero() {
        return Err(Error::Contract(format!(
            "heun_step needs σ_cur > σ_next ≥ 0, got {sigma_cur} → {sigma_next}"
        )));
    }
    let dt = sigma_next - sigma_cur;
    let den = denoise(z, sigma_cur)?;
    let d_cur = z.zip_map(&den, |x, d| (x - d) / sigma_cur)?;
    let euler = z.zip_map(&d_cur, |x, d| x + dt * d)?;
    if sigma_next == T::zero() {
        return Ok(euler);
    }
    let den_next = denoise(&euler, sigma_next)?;
    let d_next = euler.zip_map(&den_next, |x, d| (x - d) / sigma_next)?;
    let half = T::lit(0.5);
    let avg = d_cur.zip_map(&d_next, |a, b| half * (a + b))?;
    z.zip_map(&avg, |x, d| x + dt * d)
}

/// Integrates from `z_init` (already at `ladder[0]`) down the whole ladder.
pub fn run_ladder<T, F>(denoise: &mut F, z_init: Tensor<T>, ladder: &[T]) -> Result<Tensor<T>>
where
    T: Scalar,
    F: FnMut(&Tensor<T>, T) -> Result<Tensor<T>>,
{
    ladder
        .windows(2)
        .try_fold(z_init, |z, w| heun_step(denoise, &z, w[0], w[1]))
}
