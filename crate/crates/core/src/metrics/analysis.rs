use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::distribution::pearson;
use crate::error::{Error, Result};

/// Groups keyed by `(dataset, metric)`.
pub type GroupKey = (String, String);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScores {
    pub normalized: BTreeMap<GroupKey, Vec<f64>>,
    /// Groups with fewer than two values or zero variance.
    pub dropped: Vec<GroupKey>,
}

/// Standardizes each group by its own mean and population std.
pub fn zscore_normalize(groups: &BTreeMap<GroupKey, Vec<f64>>) -> ZScores {
    let mut normalized = BTreeMap::new();
    let mut dropped = Vec::new();
    for (key, v) in groups {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        if v.len() < 2 || !(std > 0.0) {
            dropped.push(key.clone());
            continue;
        }
        normalized.insert(key.clone(), v.iter().map(|x| (x - mean) / std).collect());
    }
    ZScores { normalized, dropped }
}

/// Average ranks (1-based) with ties sharing their mean rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        idx[i..=j].iter().for_each(|&k| r[k] = avg);
        i = j + 1;
    }
    r
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&ranks(x), &ranks(y))
}

/// Minimum number of jointly observed points for a correlation entry.
pub const MIN_OVERLAP: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrices {
    pub names: Vec<String>,
    /// `None` marks an unavailable entry.
    pub pearson: Vec<Vec<Option<f64>>>,
    pub spearman: Vec<Vec<Option<f64>>>,
}

/// Pairwise-complete Pearson and Spearman matrices over metric vectors;
/// `points[i][m]` is metric `m` of instance `i`.
pub fn correlation_matrix(names: &[String], points: &[Vec<Option<f64>>]) -> Result<CorrelationMatrices> {
    let m = names.len();
    if points.iter().any(|p| p.len() != m) {
        return Err(Error::Data("every point needs one entry per metric".into()));
    }
    let mut pm = vec![vec![None; m]; m];
    let mut sm = vec![vec![None; m]; m];
    for a in 0..m {
        for b in a..m {
            let (x, y): (Vec<f64>, Vec<f64>) = points
                .iter()
                .filter_map(|p| match (p[a], p[b]) {
                    (Some(u), Some(v)) if u.is_finite() && v.is_finite() => Some((u, v)),
                    _ => None,
                })
                .unzip();
            if x.len() < MIN_OVERLAP {
                continue;
            }
            let (pv, sv) = if a == b {
                let ok = pearson(&x, &y).map(|_| 1.0);
                (ok, ok)
            } else {
                (pearson(&x, &y), spearman(&x, &y))
            };
            pm[a][b] = pv;
            pm[b][a] = pv;
            sm[a][b] = sv;
            sm[b][a] = sv;
        }
    }
    Ok(CorrelationMatrices {
        names: names.to_vec(),
        pearson: pm,
        spearman: sm,
    })
}

/// Writes a square matrix with a leading `metric` column; unavailable
/// entries are left empty.
pub fn write_matrix_csv(names: &[String], matrix: &[Vec<Option<f64>>], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["metric".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in names.iter().zip(matrix) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Equal-weight mean of utility and privacy.
pub fn balanced_score(utility: f64, dcr_overfit: f64) -> f64 {
    0.5 * (utility + dcr_overfit)
}

/// One checkpoint's quality/privacy trade-off.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub step: u64,
    pub quality: f64,
    pub privacy: f64,
}

/// Index of the point with the highest balanced score; ties go to the
/// earliest position.
pub fn best_balanced(points: &[FrontierPoint]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let s = balanced_score(p.quality, p.privacy);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

pub fn write_frontier_csv(points: &[FrontierPoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_frontier_csv(path: &Path) -> Result<Vec<FrontierPoint>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}
