//! Pretraining over a corpus, checkpoint selection by latent FID, conditional
//! sampling and end-to-end synthesis.

mod config;
mod fid;
mod sample;
mod synth;
mod train;

pub use config::TrainConfig;
pub use fid::{frechet_distance, latent_fid, moments, pool_features, sqrt_psd, LatentFid};
pub use sample::{
    argmin_earliest, denoise_chunked, ensure_disjoint, initial_latents, sample_latents, sample_latents_with,
    select_checkpoint, validation_fid, validation_tasks, SelectionReport, ValidationTask, SAMPLING_CHUNK,
};
pub use synth::{synthesize, SynthConfig, Synthesis, DEFAULT_SYNTH_ROWS};
pub use train::{
    denoising_loss, denoising_loss_graph, encode_task, fingerprint, pretrain, train_dataset_specific, EncodedTask,
    LogRecord, PretrainOutput, TrainObserver,
};
