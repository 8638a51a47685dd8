//! The conditional denoising network: context and noisy query latents are
//! projected into a shared model space, processed by alternating feature-wise
//! and sample-wise attention, and mapped back to denoised query latents.

mod checkpoint;
mod mask;
mod model;
mod posenc;

pub use checkpoint::{sidecar_path, Checkpoint, CheckpointHeader, ManifestEntry, FORMAT_VERSION, MAGIC};
pub use mask::{build_mask, AttentionMask};
pub use model::{Activation, Axis, DenoiserConfig, DenoiserModel, LAYER_PLAN};
pub use posenc::{context_pos_enc_2d, feature_pos_enc, SINUSOID_BASE};

#[cfg(test)]
mod tests;
