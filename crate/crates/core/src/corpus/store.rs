use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::family::{generate_dataset, TaskSpec};
use super::ops::{expand_variants, DEFAULT_VARIANTS};
use crate::encdec::Table;
use crate::error::{Error, Result};
use crate::seeds;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to regenerate a corpus bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub tasks: Vec<TaskSpec>,
    #[serde(default = "default_variants")]
    pub variants: usize,
    #[serde(default = "default_permute")]
    pub permute: bool,
}

fn default_variants() -> usize {
    DEFAULT_VARIANTS
}

fn default_permute() -> bool {
    true
}

impl CorpusManifest {
    pub fn new(tasks: Vec<TaskSpec>) -> Self {
        Self {
            tasks,
            variants: DEFAULT_VARIANTS,
            permute: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants == 0 {
            return Err(Error::Config("variants per task must be at least 1".into()));
        }
        let mut ids = std::collections::HashSet::new();
        for t in &self.tasks {
            t.validate()?;
            if !ids.insert(t.task_id.as_str()) {
                return Err(Error::Config(format!("duplicate task id {:?}", t.task_id)));
            }
        }
        Ok(())
    }

    /// Variants per task actually produced.
    pub fn variants_per_task(&self) -> usize {
        if self.permute {
            self.variants
        } else {
            1
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = serde_json::from_slice(&fs::read(path)?)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusEntry {
    pub task_id: String,
    pub variant_id: String,
    pub table: Table,
}

pub fn variant_id(v: usize) -> String {
    format!("v{v}")
}

fn task_entries(task: &TaskSpec, manifest: &CorpusManifest) -> Result<Vec<CorpusEntry>> {
    let base = generate_dataset(task)?;
    let variants = expand_variants(&base, manifest.variants, manifest.permute, seeds::derive(task.seed, &[2]))?;
    Ok(variants
        .into_iter()
        .enumerate()
        .map(|(v, table)| CorpusEntry {
            task_id: task.task_id.clone(),
            variant_id: variant_id(v),
            table,
        })
        .collect())
}

/// Generates every variant of every task in manifest order.
pub fn build_corpus(manifest: &CorpusManifest) -> Result<Vec<CorpusEntry>> {
    manifest.validate()?;
    let mut out = Vec::new();
    for task in &manifest.tasks {
        out.extend(task_entries(task, manifest)?);
    }
    Ok(out)
}

pub fn entry_paths(dir: &Path, task_id: &str, variant: &str) -> (PathBuf, PathBuf) {
    let base = dir.join(task_id);
    (base.join(format!("{variant}.csv")), base.join(format!("{variant}.schema.json")))
}

/// Writes `{dir}/{task_id}/{variant_id}.csv` plus a schema file per variant
/// and the manifest at `{dir}/manifest.json`. Returns the CSV paths.
pub fn materialize(manifest: &CorpusManifest, dir: &Path) -> Result<Vec<PathBuf>> {
    manifest.validate()?;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for task in &manifest.tasks {
        fs::create_dir_all(dir.join(&task.task_id))?;
        for e in task_entries(task, manifest)? {
            let (csv, schema) = entry_paths(dir, &e.task_id, &e.variant_id);
            e.table.write_csv(&csv, &schema)?;
            written.push(csv);
        }
    }
    manifest.save(&dir.join(MANIFEST_FILE))?;
    Ok(written)
}

/// Reads a materialized corpus back from disk.
pub fn load_corpus(dir: &Path) -> Result<(CorpusManifest, Vec<CorpusEntry>)> {
    let manifest = CorpusManifest::load(&dir.join(MANIFEST_FILE))?;
    let mut out = Vec::new();
    for task in &manifest.tasks {
        for v in 0..manifest.variants_per_task() {
            let variant = variant_id(v);
            let (csv, schema) = entry_paths(dir, &task.task_id, &variant);
            out.push(CorpusEntry {
                task_id: task.task_id.clone(),
                variant_id: variant,
                table: Table::read_csv(&csv, &schema)?,
            });
        }
    }
    Ok((manifest, out))
}
