use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::analysis::balanced_score;
use super::density::{ip_alpha, ir_beta, DEFAULT_K};
use super::distance::{dcr_overfit, DistanceConfig};
use super::distribution::{shape, trend};
use super::learners::Learner;
use super::utility::utility;
use crate::encdec::Table;
use crate::error::Result;

/// Every metric for one synthetic table; `None` marks an unavailable value
/// with the reason in `notes`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Free-form labels used when aggregating many reports.
    #[serde(default)]
    pub dataset: Option<String>,
    #[serde(default)]
    pub method: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub dcr_p: Option<f64>,
    pub dcr_overfit: Option<f64>,
    pub shape: Option<f64>,
    pub trend: Option<f64>,
    pub ip_alpha: Option<f64>,
    pub ir_beta: Option<f64>,
    /// Learner name → AUC (classification) or R² (regression).
    pub utility: BTreeMap<String, Option<f64>>,
    /// Mean of boosted-stump utility and DCR overfit score.
    pub balanced_score: Option<f64>,
    pub notes: Vec<String>,
}

/// Tables an evaluation compares against.
pub struct EvalSets<'a> {
    pub train: &'a Table,
    /// Without a validation split the overfit score is unavailable.
    pub val: Option<&'a Table>,
    pub test: &'a Table,
}

fn keep<T>(name: &str, r: Result<T>, notes: &mut Vec<String>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("{name}: {e}"));
            None
        }
    }
}

/// Computes the full suite. Privacy uses train vs validation; fidelity and
/// density compare against train; utility trains on `syn` and tests on `test`.
pub fn evaluate(syn: &Table, sets: &EvalSets<'_>, k: Option<usize>) -> Result<MetricReport> {
    syn.ensure_same_schema(sets.train)?;
    syn.ensure_same_schema(sets.test)?;
    let mut notes = Vec::new();
    let dcr = match sets.val {
        Some(val) => {
            syn.ensure_same_schema(val)?;
            let dist = DistanceConfig::fit(&[sets.train, val])?;
            keep("dcr_overfit", dcr_overfit(syn, sets.train, val, &dist), &mut notes)
        }
        None => {
            notes.push("dcr_overfit: unavailable without a validation split".into());
            None
        }
    };
    let shape_v = keep("shape", shape(syn, sets.train), &mut notes);
    let trend_v = keep("trend", trend(syn, sets.train), &mut notes).and_then(|t| {
        if !t.skipped.is_empty() {
            notes.push(format!("trend: skipped constant-column pairs {}", t.skipped.join(", ")));
        }
        t.score
    });
    let k = k.unwrap_or(DEFAULT_K);
    let real_dist = DistanceConfig::fit(&[sets.train])?;
    let ip = keep("ip_alpha", ip_alpha(syn, sets.train, k, &real_dist), &mut notes);
    let ir = keep("ir_beta", ir_beta(syn, sets.train, k, &real_dist), &mut notes);
    let mut util = BTreeMap::new();
    for l in Learner::ALL {
        util.insert(l.name().to_string(), keep(l.name(), utility(syn, sets.test, l), &mut notes));
    }
    let boosted = util[Learner::BoostedStumps.name()];
    let balanced = match (boosted, dcr) {
        (Some(u), Some(d)) => Some(balanced_score(u, d.score)),
        _ => None,
    };
    Ok(MetricReport {
        dataset: None,
        method: None,
        seed: None,
        dcr_p: dcr.map(|d| d.p),
        dcr_overfit: dcr.map(|d| d.score),
        shape: shape_v,
        trend: trend_v,
        ip_alpha: ip,
        ir_beta: ir,
        utility: util,
        balanced_score: balanced,
        notes,
    })
}
