use serde::{Deserialize, Serialize};

use super::sample::sample_latents;
use crate::corpus::{split_indices, SplitSpec, DEFAULT_CONTEXT_RATIO};
use crate::denoiser::DenoiserModel;
use crate::encdec::{decode, fit_stats, train_decoders, DecoderConfig, DefaultEncoder, Table};
use crate::error::{Error, Result};
use crate::ndnum::Tensor;
use crate::scalar::Scalar;
use crate::schedule::ScheduleConfig;
use crate::seeds;

/// Default number of synthetic rows.
pub const DEFAULT_SYNTH_ROWS: usize = 2500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub rows: usize,
    pub context_ratio: f64,
    pub decoder: DecoderConfig,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            rows: DEFAULT_SYNTH_ROWS,
            context_ratio: DEFAULT_CONTEXT_RATIO,
            decoder: DecoderConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub table: Table,
    pub decoder_losses: Vec<f64>,
    /// Input rows used as conditioning context.
    pub context_rows: Vec<usize>,
    /// Input rows used to fit the decoders.
    pub query_rows: Vec<usize>,
}

/// Splits `table`, samples latents conditioned on the context side, fits
/// decoders on the query side and decodes `config.rows` synthetic rows.
pub fn synthesize<T: Scalar>(
    table: &Table,
    model: &DenoiserModel<T>,
    encoder: &DefaultEncoder,
    schedule: &ScheduleConfig,
    config: &SynthConfig,
) -> Result<Synthesis> {
    if config.rows == 0 {
        return Err(Error::Config("number of synthetic rows must be at least 1".into()));
    }
    if encoder.latent_dim != model.config().latent_dim {
        return Err(Error::Config(format!(
            "encoder latent dim {} differs from denoiser latent dim {}",
            encoder.latent_dim,
            model.config().latent_dim
        )));
    }
    let split = SplitSpec {
        context_ratio: config.context_ratio,
        seed: seeds::derive(config.seed, &[0]),
    };
    let (context_rows, query_rows) = split_indices(table.n_rows(), &split)?;
    let stats = fit_stats(table)?;
    let z: Tensor<T> = encoder.encode_table(table, &stats)?;
    let z_ctx = z.select0(&context_rows)?;
    let z_qry = z.select0(&query_rows)?;
    let generated = sample_latents(model, &z_ctx, config.rows, schedule, seeds::derive(config.seed, &[1]))?;
    let qry = table.select_rows(&query_rows);
    let decoder = DecoderConfig {
        seed: seeds::derive(config.seed, &[2]),
        ..config.decoder.clone()
    };
    let trained = train_decoders(&z_qry, &qry, &stats, &decoder)?;
    let out = decode(&generated, &trained.decoders, &stats, table.schema())?;
    Ok(Synthesis {
        table: out,
        decoder_losses: trained.losses,
        context_rows,
        query_rows,
    })
}
