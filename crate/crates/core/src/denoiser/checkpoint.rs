//! Versioned binary checkpoint container.
//!
//! Layout: 8-byte magic, `u32` LE format version, `u64` LE header length,
//! UTF-8 JSON header, then every parameter as `f64` little-endian values in
//! manifest order. A JSON copy of the header (without the manifest) is written
//! beside the file for inspection.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::{DenoiserConfig, DenoiserModel};
use crate::error::{Error, Result};
use crate::ndnum::Tensor;
use crate::scalar::Scalar;
use crate::schedule::ScheduleConfig;

pub const MAGIC: &[u8; 8] = b"CTXSCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in `f64` elements from the start of the data section.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub config: DenoiserConfig,
    pub step: u64,
    pub train_fingerprint: String,
    pub validation_fid: Option<f64>,
    #[serde(default)]
    pub encoder_seed: u64,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    pub manifest: Vec<ManifestEntry>,
}

/// Model snapshot plus training bookkeeping.
#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub model: DenoiserModel<T>,
    pub step: u64,
    pub train_fingerprint: String,
    pub validation_fid: Option<f64>,
    /// Seed of the encoder whose latent space the model was trained on.
    pub encoder_seed: u64,
    pub schedule: ScheduleConfig,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(model: DenoiserModel<T>, step: u64, train_fingerprint: impl Into<String>) -> Self {
        Self {
            model,
            step,
            train_fingerprint: train_fingerprint.into(),
            validation_fid: None,
            encoder_seed: 0,
            schedule: ScheduleConfig::default(),
        }
    }

    fn header(&self) -> CheckpointHeader {
        let mut offset = 0;
        let manifest = self
            .model
            .names()
            .iter()
            .zip(self.model.params())
            .map(|(name, t)| {
                let e = ManifestEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += t.len();
                e
            })
            .collect();
        CheckpointHeader {
            format_version: FORMAT_VERSION,
            config: self.model.config().clone(),
            step: self.step,
            train_fingerprint: self.train_fingerprint.clone(),
            validation_fid: self.validation_fid,
            encoder_seed: self.encoder_seed,
            schedule: self.schedule.clone(),
            manifest,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header())?;
        let mut out = Vec::with_capacity(20 + header.len() + 8 * self.model.parameter_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.model.params() {
            for v in t.data() {
                out.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let hlen = u64::from_le_bytes(b8) as usize;
        if r.len() < hlen {
            return Err(Error::Format("truncated header".into()));
        }
        let header: CheckpointHeader = serde_json::from_slice(&r[..hlen])?;
        let data = &r[hlen..];
        let total: usize = header.manifest.iter().map(|e| e.shape.iter().product::<usize>()).sum();
        if data.len() != total * 8 {
            return Err(Error::Format(format!(
                "data section has {} bytes, manifest needs {}",
                data.len(),
                total * 8
            )));
        }
        let mut named = Vec::with_capacity(header.manifest.len());
        for e in &header.manifest {
            let n: usize = e.shape.iter().product();
            let values: Vec<T> = data[e.offset * 8..(e.offset + n) * 8]
                .chunks_exact(8)
                .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
                .collect();
            named.push((e.name.clone(), Tensor::new(e.shape.clone(), values)?));
        }
        let model = DenoiserModel::from_named(header.config, named)?;
        Ok(Self {
            model,
            step: header.step,
            train_fingerprint: header.train_fingerprint,
            validation_fid: header.validation_fid,
            encoder_seed: header.encoder_seed,
            schedule: header.schedule,
        })
    }

    /// Writes the binary container and its JSON sidecar (`<path>.json`).
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        fs::File::create(path)?.write_all(&bytes)?;
        let mut side = self.header();
        side.manifest.clear();
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}
