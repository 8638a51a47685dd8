//! In-context latent diffusion for tabular data synthesis.
//!
//! A conditional denoiser is pretrained across many small datasets to generate
//! query-row latents given a context set of rows from the same table. New tables
//! are synthesized by conditioning on their rows, and the output is scored with
//! a quality and privacy metric suite.

pub mod corpus;
pub mod denoiser;
pub mod encdec;
pub mod error;
pub mod metrics;
pub mod ndnum;
pub mod pipeline;
pub mod scalar;
pub mod schedule;
pub mod seeds;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = ndnum::Tensor<f64>;
pub type Tensor32 = ndnum::Tensor<f32>;
pub type Denoiser64 = denoiser::DenoiserModel<f64>;
pub type Denoiser32 = denoiser::DenoiserModel<f32>;
pub type Checkpoint64 = denoiser::Checkpoint<f64>;
