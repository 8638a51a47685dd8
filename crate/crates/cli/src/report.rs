//! `report`: aggregation of many metric reports.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use ctxsynth::metrics::{correlation_matrix, write_matrix_csv, zscore_normalize, Learner, MetricReport};
use serde::{Deserialize, Serialize};

use crate::runconfig::{read_config_file, require_path, resolve, usage, write_json, Overrides};

/// Label for reports that carry no dataset or method name.
pub const UNLABELED: &str = "unlabeled";

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Metric report JSON files.
    inputs: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub inputs: Vec<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Scalar metrics of a report in a fixed order.
pub fn metric_values(r: &MetricReport) -> Vec<(String, Option<f64>)> {
    let mut v = vec![
        ("dcr_overfit".to_string(), r.dcr_overfit),
        ("shape".to_string(), r.shape),
        ("trend".to_string(), r.trend),
        ("ip_alpha".to_string(), r.ip_alpha),
        ("ir_beta".to_string(), r.ir_beta),
    ];
    for (name, u) in &r.utility {
        v.push((format!("utility_{name}"), *u));
    }
    v.push(("balanced_score".to_string(), r.balanced_score));
    v
}

fn label(s: &Option<String>) -> String {
    s.clone().unwrap_or_else(|| UNLABELED.to_string())
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    dataset: &'a str,
    method: &'a str,
    metric: &'a str,
    n: usize,
    mean: f64,
    std: f64,
    /// Percent scale, one decimal.
    mean_pm_std: String,
}

#[derive(Serialize)]
struct PlotRow<'a> {
    dataset: &'a str,
    method: &'a str,
    seed: Option<u64>,
    quality: Option<f64>,
    privacy: Option<f64>,
}

pub fn report_cmd(args: &ReportArgs) -> Result<()> {
    let file = args.config.as_deref().map(read_config_file).transpose()?;
    let mut ov = Overrides::default();
    if !args.inputs.is_empty() {
        ov.set("inputs", Some(&args.inputs));
    }
    ov.set("out", args.out.as_ref());
    let cfg: ReportConfig = resolve(&ReportConfig::default(), file.as_ref(), &ov)?;
    let out = require_path(&cfg.out, "out")?;
    if cfg.inputs.is_empty() {
        return Err(usage("report needs at least one input"));
    }
    let mut reports = Vec::with_capacity(cfg.inputs.len());
    for p in &cfg.inputs {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let r: MetricReport = serde_json::from_str(&text)
            .map_err(|e| ctxsynth::Error::Data(format!("report {}: {e}", p.display())))?;
        reports.push(r);
    }
    std::fs::create_dir_all(&out)?;

    // mean ± std per (dataset, method, metric), over seeds
    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    let mut order: BTreeMap<String, usize> = BTreeMap::new();
    for r in &reports {
        for (i, (metric, v)) in metric_values(r).into_iter().enumerate() {
            order.entry(metric.clone()).or_insert(i);
            if let Some(v) = v.filter(|v| v.is_finite()) {
                groups.entry((label(&r.dataset), label(&r.method), metric)).or_default().push(v);
            }
        }
    }
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    let mut keys: Vec<_> = groups.keys().cloned().collect();
    keys.sort_by_key(|(d, m, metric)| (d.clone(), m.clone(), order[metric], metric.clone()));
    for key in &keys {
        let v = &groups[key];
        let (mean, std) = mean_std(v);
        w.serialize(SummaryRow {
            dataset: &key.0,
            method: &key.1,
            metric: &key.2,
            n: v.len(),
            mean,
            std,
            mean_pm_std: format!("{:.1}±{:.1}", 100.0 * mean, 100.0 * std),
        })?;
    }
    w.flush()?;

    // z-score each metric within its dataset, then correlate across runs
    let mut names: Vec<String> = order.keys().cloned().collect();
    names.sort_by_key(|n| (order[n], n.clone()));
    let mut raw: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut slots: Vec<Vec<Option<(String, usize)>>> = Vec::with_capacity(reports.len());
    for r in &reports {
        let values: BTreeMap<String, Option<f64>> = metric_values(r).into_iter().collect();
        let mut row = Vec::with_capacity(names.len());
        for name in &names {
            match values.get(name).copied().flatten().filter(|v| v.is_finite()) {
                Some(v) => {
                    let key = (label(&r.dataset), name.clone());
                    let list = raw.entry(key.clone()).or_default();
                    list.push(v);
                    row.push(Some((key.0, list.len() - 1)));
                }
                None => row.push(None),
            }
        }
        slots.push(row);
    }
    let z = zscore_normalize(&raw);
    let points: Vec<Vec<Option<f64>>> = slots
        .iter()
        .map(|row| {
            row.iter()
                .zip(&names)
                .map(|(slot, name)| {
                    slot.as_ref()
                        .and_then(|(ds, i)| z.normalized.get(&(ds.clone(), name.clone())).map(|v| v[*i]))
                })
                .collect()
        })
        .collect();
    let corr = correlation_matrix(&names, &points)?;
    write_matrix_csv(&names, &corr.pearson, &out.join("pearson.csv"))?;
    write_matrix_csv(&names, &corr.spearman, &out.join("spearman.csv"))?;

    let mut w = csv::Writer::from_path(out.join("frontier_points.csv"))?;
    for r in &reports {
        w.serialize(PlotRow {
            dataset: &label(&r.dataset),
            method: &label(&r.method),
            seed: r.seed,
            quality: r.utility.get(Learner::BoostedStumps.name()).copied().flatten(),
            privacy: r.dcr_overfit,
        })?;
    }
    w.flush()?;
    write_json(&out.join("run_config.json"), &cfg)?;
    let datasets: std::collections::BTreeSet<String> = reports.iter().map(|r| label(&r.dataset)).collect();
    println!(
        "aggregated {} reports over {} datasets into {}",
        reports.len(),
        datasets.len(),
        out.display()
    );
    Ok(())
}
