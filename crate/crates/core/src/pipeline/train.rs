use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::corpus::{cap_indices, split_indices, CorpusEntry, SplitSpec};
use crate::denoiser::{Checkpoint, DenoiserConfig, DenoiserModel};
use crate::encdec::{fit_stats, DefaultEncoder, Table};
use crate::error::{Error, Result};
use crate::ndnum::{adam_step, reverse_grad, AdamConfig, AdamState, CosineSchedule, Graph, Tensor, Var};
use crate::scalar::Scalar;
use crate::schedule::{loss_weight, sample_sigma, ScheduleConfig};
use crate::seeds;

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub wallclock: f64,
}

/// Receives training progress. The unit type ignores everything.
pub trait TrainObserver<T> {
    fn on_log(&mut self, _record: &LogRecord) {}

    fn on_checkpoint(&mut self, _checkpoint: &Checkpoint<T>) -> Result<()> {
        Ok(())
    }
}

impl<T> TrainObserver<T> for () {}

pub struct PretrainOutput<T> {
    pub checkpoints: Vec<Checkpoint<T>>,
    pub log: Vec<LogRecord>,
}

/// Stable 64-bit digest of arbitrary bytes.
pub fn fingerprint(bytes: &[u8]) -> String {
    let h = bytes
        .chunks(8)
        .fold(0x6a09_e667_f3bc_c908u64, |acc, c| {
            let mut w = [0u8; 8];
            w[..c.len()].copy_from_slice(c);
            seeds::mix64(acc ^ u64::from_le_bytes(w))
        });
    format!("{:016x}", seeds::mix64(h ^ bytes.len() as u64))
}

/// Context and query latents of one randomly split table.
pub struct EncodedTask<T> {
    pub z_ctx: Tensor<T>,
    pub z_qry: Tensor<T>,
    pub ctx_rows: Vec<usize>,
    pub qry_rows: Vec<usize>,
}

/// Encodes `table` with statistics fitted on all of its rows, then splits
/// the latents and caps the query side.
pub fn encode_task<T: Scalar>(
    table: &Table,
    encoder: &DefaultEncoder,
    split: &SplitSpec,
    query_cap: usize,
    cap_seed: u64,
) -> Result<EncodedTask<T>> {
    let stats = fit_stats(table)?;
    let z: Tensor<T> = encoder.encode_table(table, &stats)?;
    let (ctx_rows, qry_all) = split_indices(table.n_rows(), split)?;
    let qry_rows: Vec<usize> = cap_indices(qry_all.len(), query_cap, cap_seed)?
        .into_iter()
        .map(|i| qry_all[i])
        .collect();
    Ok(EncodedTask {
        z_ctx: z.select0(&ctx_rows)?,
        z_qry: z.select0(&qry_rows)?,
        ctx_rows,
        qry_rows,
    })
}

/// `λ(σ)·mean((D(Z + σE; σ, Z_ctx) − Z)²)` as a graph node.
#[allow(clippy::too_many_arguments)]
pub fn denoising_loss_graph<T: Scalar>(
    model: &DenoiserModel<T>,
    g: &mut Graph<T>,
    p: &[Var],
    z_ctx: &Tensor<T>,
    z_qry: &Tensor<T>,
    sigma: T,
    noise: &Tensor<T>,
    schedule: &ScheduleConfig,
) -> Result<Var> {
    let z_sigma = z_qry.zip_map(noise, |z, e| z + sigma * e)?;
    let den = model.forward_graph(g, p, &z_sigma, sigma, z_ctx, schedule)?;
    let target = g.constant(z_qry.clone());
    let r = g.sub(den, target)?;
    let sq = g.square(r);
    let m = g.mean(sq);
    Ok(g.scale(m, loss_weight(sigma, schedule)?))
}

pub fn denoising_loss<T: Scalar>(
    model: &DenoiserModel<T>,
    z_ctx: &Tensor<T>,
    z_qry: &Tensor<T>,
    sigma: T,
    noise: &Tensor<T>,
    schedule: &ScheduleConfig,
) -> Result<f64> {
    let mut g = Graph::new();
    let p = model.bind(&mut g, false);
    let l = denoising_loss_graph(model, &mut g, &p, z_ctx, z_qry, sigma, noise, schedule)?;
    Ok(g.value(l).item().as_f64())
}

fn run_fingerprint(
    corpus: &[CorpusEntry],
    encoder: &DefaultEncoder,
    model_config: &DenoiserConfig,
    schedule: &ScheduleConfig,
    train: &TrainConfig,
) -> Result<String> {
    let ids: Vec<(&str, &str)> = corpus.iter().map(|e| (e.task_id.as_str(), e.variant_id.as_str())).collect();
    let blob = serde_json::to_vec(&(ids, encoder.seed, encoder.latent_dim, model_config, schedule, train))?;
    Ok(fingerprint(&blob))
}

/// Trains a fresh denoiser on `corpus`, one dataset per optimizer step.
///
/// Each step re-splits its dataset with a ratio drawn from the configured
/// range, caps the query side, draws one σ for the whole batch and minimizes
/// the weighted denoising loss. Checkpoints are emitted every
/// `checkpoint_every` epochs and after the last one.
pub fn pretrain<T: Scalar>(
    corpus: &[CorpusEntry],
    encoder: &DefaultEncoder,
    model_config: &DenoiserConfig,
    schedule: &ScheduleConfig,
    train: &TrainConfig,
    observer: &mut dyn TrainObserver<T>,
) -> Result<PretrainOutput<T>> {
    if corpus.is_empty() {
        return Err(Error::Data("pretraining corpus is empty".into()));
    }
    train.validate()?;
    schedule.validate()?;
    if encoder.latent_dim != model_config.latent_dim {
        return Err(Error::Config(format!(
            "encoder latent dim {} differs from denoiser latent dim {}",
            encoder.latent_dim, model_config.latent_dim
        )));
    }
    let fp = run_fingerprint(corpus, encoder, model_config, schedule, train)?;
    let mut model = DenoiserModel::<T>::new(model_config.clone(), seeds::derive(train.seed, &[0]))?;
    let mut state = AdamState::new(model.params());
    let adam = AdamConfig::default();
    let total = (train.epochs * corpus.len()) as u64;
    let lr_schedule = CosineSchedule::new(train.lr, train.warmup_ratio, total);
    let (lo, hi) = train.context_ratio_range;
    let started = Instant::now();
    let mut step = 0u64;
    let mut checkpoints = Vec::new();
    let snapshot = |model: &DenoiserModel<T>, step: u64| {
        let mut ck = Checkpoint::new(model.clone(), step, fp.clone());
        ck.encoder_seed = encoder.seed;
        ck.schedule = schedule.clone();
        ck
    };
    if train.initial_checkpoint {
        let ck = snapshot(&model, 0);
        observer.on_checkpoint(&ck)?;
        checkpoints.push(ck);
    }
    let mut log = Vec::with_capacity(total as usize);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for epoch in 0..train.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(train.seed, &[1, epoch as u64]));
        order.shuffle(&mut rng);
        for &i in &order {
            let entry = &corpus[i];
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(train.seed, &[2, step]));
            let ratio = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let split = SplitSpec {
                context_ratio: ratio,
                seed: rng.random(),
            };
            let task = encode_task::<T>(&entry.table, encoder, &split, train.batch_query_cap, rng.random())
                .map_err(|e| Error::Data(format!("dataset {}/{}: {e}", entry.task_id, entry.variant_id)))?;
            let sigma: T = sample_sigma(&mut rng, schedule);
            let noise = Tensor::<T>::randn(task.z_qry.shape().to_vec(), 1.0, &mut rng);

            let mut g = Graph::new();
            let p = model.bind(&mut g, true);
            let loss = denoising_loss_graph(&model, &mut g, &p, &task.z_ctx, &task.z_qry, sigma, &noise, schedule)?;
            let lv = g.value(loss).item().as_f64();
            if !lv.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss on dataset {}/{} at step {step}",
                    entry.task_id, entry.variant_id
                )));
            }
            let grads = reverse_grad(&g, loss, &p)?;
            let lr = lr_schedule.lr(step);
            if train.weight_decay > 0.0 {
                let keep = T::lit(1.0 - lr * train.weight_decay);
                for t in model.params_mut() {
                    t.data_mut().iter_mut().for_each(|v| *v *= keep);
                }
            }
            adam_step(model.params_mut(), &grads, &mut state, lr, &adam)?;
            step += 1;
            let record = LogRecord {
                step,
                loss: lv,
                lr,
                wallclock: started.elapsed().as_secs_f64(),
            };
            observer.on_log(&record);
            log.push(record);
        }
        if (epoch + 1) % train.checkpoint_every == 0 || epoch + 1 == train.epochs {
            let ck = snapshot(&model, step);
            observer.on_checkpoint(&ck)?;
            checkpoints.push(ck);
        }
    }
    Ok(PretrainOutput { checkpoints, log })
}

/// The dataset-specific variant: the corpus is the target table alone,
/// re-split every epoch.
pub fn train_dataset_specific<T: Scalar>(
    table: &Table,
    encoder: &DefaultEncoder,
    model_config: &DenoiserConfig,
    schedule: &ScheduleConfig,
    train: &TrainConfig,
    observer: &mut dyn TrainObserver<T>,
) -> Result<PretrainOutput<T>> {
    let corpus = [CorpusEntry {
        task_id: "target".into(),
        variant_id: "v0".into(),
        table: table.clone(),
    }];
    pretrain(&corpus, encoder, model_config, schedule, train, observer)
}
