//! `plan` and `corpus`: drawing task manifests and materializing corpora.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use ctxsynth::corpus::{materialize, random_tasks, CorpusManifest, CorpusPlan};
use serde::{Deserialize, Serialize};

use crate::runconfig::{read_config_file, require_path, resolve, usage, write_json, Overrides};

/// Parses `lo:hi` (or a single value) into an inclusive range.
fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').unwrap_or((s, s));
    let lo = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let hi = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    Ok((lo, hi))
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// Output manifest path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of tasks.
    #[arg(long)]
    tasks: Option<usize>,
    /// Row range `lo:hi` (inclusive).
    #[arg(long, value_parser = parse_range)]
    rows: Option<(usize, usize)>,
    /// Column range `lo:hi` (inclusive, target included).
    #[arg(long, value_parser = parse_range)]
    features: Option<(usize, usize)>,
    /// Master seed for task draws [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Task id prefix; use distinct prefixes for training and validation
    /// manifests [default: task].
    #[arg(long)]
    prefix: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub out: Option<PathBuf>,
    pub prefix: String,
    pub plan: CorpusPlan,
}

/// Desk corpus shape: small tables so a full pretraining run fits on one core.
pub fn desk_plan() -> CorpusPlan {
    CorpusPlan {
        n_tasks: 200,
        rows: (50, 200),
        features: (2, 6),
        seed: 0,
    }
}

pub fn plan(args: &PlanArgs) -> Result<()> {
    let file = args.config.as_deref().map(read_config_file).transpose()?;
    let mut ov = Overrides::default();
    ov.set("out", args.out.as_ref())
        .set("plan.n_tasks", args.tasks)
        .set("plan.rows", args.rows)
        .set("plan.features", args.features)
        .set("plan.seed", args.seed)
        .set("prefix", args.prefix.as_ref());
    let defaults = PlanConfig {
        out: None,
        prefix: "task".into(),
        plan: desk_plan(),
    };
    let cfg: PlanConfig = resolve(&defaults, file.as_ref(), &ov)?;
    let out = require_path(&cfg.out, "out")?;
    let mut tasks = random_tasks(&cfg.plan)?;
    for (i, t) in tasks.iter_mut().enumerate() {
        t.task_id = format!("{}{i:04}", cfg.prefix);
    }
    CorpusManifest::new(tasks).save(&out)?;
    write_json(&crate::runconfig::beside(&out, "run_config.json"), &cfg)?;
    println!("wrote {} tasks to {}", cfg.plan.n_tasks, out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct CorpusArgs {
    /// Task manifest (JSON).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output corpus directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Structural variants per task [default: 5].
    #[arg(long)]
    variants: Option<usize>,
    /// Keep each table as generated (one identity variant per task).
    #[arg(long)]
    no_permute: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Overrides the manifest's own setting when present.
    pub variants: Option<usize>,
    pub no_permute: bool,
}

pub fn corpus(args: &CorpusArgs) -> Result<()> {
    let file = args.config.as_deref().map(read_config_file).transpose()?;
    let mut ov = Overrides::default();
    ov.set("manifest", args.manifest.as_ref())
        .set("out", args.out.as_ref())
        .set("variants", args.variants)
        .flag("no_permute", args.no_permute);
    let cfg: CorpusConfig = resolve(&CorpusConfig::default(), file.as_ref(), &ov)?;
    let manifest_path = require_path(&cfg.manifest, "manifest")?;
    let out = require_path(&cfg.out, "out")?;
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| usage(format!("reading manifest {}: {e}", manifest_path.display())))?;
    let mut manifest: CorpusManifest =
        serde_json::from_str(&text).map_err(|e| usage(format!("manifest {}: {e}", manifest_path.display())))?;
    if let Some(k) = cfg.variants {
        manifest.variants = k;
    }
    if cfg.no_permute {
        manifest.permute = false;
    }
    let written = materialize(&manifest, &out)?;
    write_json(&out.join("run_config.json"), &cfg)?;
    println!(
        "materialized {} tables ({} tasks x {} variants) in {}",
        written.len(),
        manifest.tasks.len(),
        manifest.variants_per_task(),
        out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_parse() {
        assert_eq!(parse_range("50:200"), Ok((50, 200)));
        assert_eq!(parse_range("7"), Ok((7, 7)));
        assert!(parse_range("a:3").is_err());
    }
}
