//! Tables, their mapping into the shared latent space, and the per-feature
//! decoders that map generated latents back to raw values.

mod decoder;
mod encoder;
mod stats;
mod table;

pub use decoder::{argmax_lowest, column_slice, decode, train_decoders, DecoderConfig, FeatureDecoder, TrainedDecoders};
pub use encoder::{DefaultEncoder, Encoder};
pub use stats::{fit_stats, ColumnStat, ColumnStats};
pub use table::{Cell, ColumnData, ColumnKind, ColumnSpec, Table, TableSchema};

/// Rank-3 latent array `(samples, features, latent_dim)`.
pub type LatentTensor<T> = crate::ndnum::Tensor<T>;

#[cfg(test)]
mod tests;
