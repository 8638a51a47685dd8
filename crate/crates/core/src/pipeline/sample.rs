use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fid::latent_fid;
use super::train::encode_task;
use crate::corpus::{CorpusEntry, CorpusManifest, SplitSpec, DEFAULT_CONTEXT_RATIO, DEFAULT_QUERY_CAP};
use crate::denoiser::{Checkpoint, DenoiserModel};
use crate::encdec::DefaultEncoder;
use crate::error::{Error, Result};
use crate::ndnum::Tensor;
use crate::scalar::Scalar;
use crate::schedule::{run_ladder, sigma_ladder, ScheduleConfig};
use crate::seeds;

/// Query rows per forward pass during sampling. Queries never attend to each
/// other, so chunking does not change the result.
pub const SAMPLING_CHUNK: usize = 256;

/// i.i.d. `N(0, σ_max²)` starting latents of shape `(k, f, d)`.
pub fn initial_latents<T: Scalar>(k: usize, f: usize, d: usize, sigma_max: f64, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::randn(vec![k, f, d], sigma_max, &mut rng)
}

/// Integrates an arbitrary denoiser from pure noise down the sampling ladder.
pub fn sample_latents_with<T, F>(
    mut denoise: F,
    shape: (usize, usize, usize),
    schedule: &ScheduleConfig,
    seed: u64,
) -> Result<Tensor<T>>
where
    T: Scalar,
    F: FnMut(&Tensor<T>, T) -> Result<Tensor<T>>,
{
    schedule.validate()?;
    let (k, f, d) = shape;
    if k == 0 {
        return Err(Error::Contract("sample_latents needs K >= 1".into()));
    }
    let ladder: Vec<T> = sigma_ladder(schedule)?;
    let z = initial_latents(k, f, d, schedule.sigma_max, seed);
    run_ladder(&mut denoise, z, &ladder)
}

/// Denoises `z` in query chunks of [`SAMPLING_CHUNK`] rows.
pub fn denoise_chunked<T: Scalar>(
    model: &DenoiserModel<T>,
    z: &Tensor<T>,
    sigma: T,
    z_ctx: &Tensor<T>,
    schedule: &ScheduleConfig,
) -> Result<Tensor<T>> {
    let k = z.shape()[0];
    if k <= SAMPLING_CHUNK {
        return model.forward(z, sigma, z_ctx, schedule);
    }
    let parts = (0..k)
        .step_by(SAMPLING_CHUNK)
        .map(|s| model.forward(&z.slice0(s, (s + SAMPLING_CHUNK).min(k))?, sigma, z_ctx, schedule))
        .collect::<Result<Vec<_>>>()?;
    Tensor::concat0(&parts.iter().collect::<Vec<_>>())
}

/// `K` latent samples conditioned on one shared context.
pub fn sample_latents<T: Scalar>(
    model: &DenoiserModel<T>,
    z_ctx: &Tensor<T>,
    k: usize,
    schedule: &ScheduleConfig,
    seed: u64,
) -> Result<Tensor<T>> {
    if z_ctx.ndim() != 3 || z_ctx.shape()[0] == 0 {
        return Err(Error::shape("sample_latents context", z_ctx.shape(), &[1, 0, 0]));
    }
    let (f, d) = (z_ctx.shape()[1], z_ctx.shape()[2]);
    sample_latents_with(|z, s| denoise_chunked(model, z, s, z_ctx, schedule), (k, f, d), schedule, seed)
}

/// Held-out context/query latents for checkpoint scoring.
pub struct ValidationTask<T> {
    pub id: String,
    pub z_ctx: Tensor<T>,
    pub z_qry: Tensor<T>,
}

/// Fails when a validation task also appears in the training manifest, by
/// id or by identical generating spec.
pub fn ensure_disjoint(train: &CorpusManifest, validation: &CorpusManifest) -> Result<()> {
    for v in &validation.tasks {
        for t in &train.tasks {
            let same_spec = t.family == v.family && t.n_rows == v.n_rows && t.n_features == v.n_features && t.seed == v.seed;
            if t.task_id == v.task_id || same_spec {
                return Err(Error::Data(format!(
                    "validation task {:?} overlaps training task {:?}",
                    v.task_id, t.task_id
                )));
            }
        }
    }
    Ok(())
}

pub fn validation_tasks<T: Scalar>(entries: &[CorpusEntry], encoder: &DefaultEncoder, seed: u64) -> Result<Vec<ValidationTask<T>>> {
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let split = SplitSpec {
                context_ratio: DEFAULT_CONTEXT_RATIO,
                seed: seeds::derive(seed, &[i as u64, 0]),
            };
            let t = encode_task(&e.table, encoder, &split, DEFAULT_QUERY_CAP, seeds::derive(seed, &[i as u64, 1]))?;
            Ok(ValidationTask {
                id: format!("{}/{}", e.task_id, e.variant_id),
                z_ctx: t.z_ctx,
                z_qry: t.z_qry,
            })
        })
        .collect()
}

/// Mean latent FID of a model over the validation tasks, generating as many
/// samples as each task has query rows.
pub fn validation_fid<T: Scalar>(
    model: &DenoiserModel<T>,
    tasks: &[ValidationTask<T>],
    schedule: &ScheduleConfig,
    seed: u64,
) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::Data("no validation tasks".into()));
    }
    let mut total = 0.0;
    for (i, t) in tasks.iter().enumerate() {
        let gen = sample_latents(model, &t.z_ctx, t.z_qry.shape()[0], schedule, seeds::derive(seed, &[i as u64]))?;
        total += latent_fid(&gen, &t.z_qry)?.value;
    }
    Ok(total / tasks.len() as f64)
}

/// Index of the lowest score; ties go to the earliest step.
pub fn argmin_earliest(steps: &[u64], scores: &[f64]) -> Result<usize> {
    if steps.is_empty() || steps.len() != scores.len() {
        return Err(Error::Data("no checkpoints to select from".into()));
    }
    let mut best = 0;
    for i in 1..scores.len() {
        let better = scores[i] < scores[best] || (scores[i] == scores[best] && steps[i] < steps[best]);
        if better || scores[best].is_nan() {
            best = i;
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub selected_step: u64,
    pub fids: Vec<(u64, f64)>,
}

/// Scores every checkpoint on the validation tasks, stores the score in the
/// checkpoint, and returns the index of the best one. A single checkpoint is
/// returned without scoring.
pub fn select_checkpoint<T: Scalar>(
    checkpoints: &mut [Checkpoint<T>],
    tasks: &[ValidationTask<T>],
    schedule: &ScheduleConfig,
    seed: u64,
) -> Result<(usize, SelectionReport)> {
    match checkpoints.len() {
        0 => Err(Error::Data("no checkpoints to select from".into())),
        1 => Ok((
            0,
            SelectionReport {
                selected_step: checkpoints[0].step,
                fids: Vec::new(),
            },
        )),
        _ => {
            let mut scores = Vec::with_capacity(checkpoints.len());
            for ck in checkpoints.iter_mut() {
                let fid = validation_fid(&ck.model, tasks, schedule, seed)?;
                ck.validation_fid = Some(fid);
                scores.push(fid);
            }
            let steps: Vec<u64> = checkpoints.iter().map(|c| c.step).collect();
            let best = argmin_earliest(&steps, &scores)?;
            Ok((
                best,
                SelectionReport {
                    selected_step: steps[best],
                    fids: steps.into_iter().zip(scores).collect(),
                },
            ))
        }
    }
}
