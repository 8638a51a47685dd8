use serde::{Deserialize, Serialize};

use crate::encdec::{ColumnData, Table};
use crate::error::{Error, Result};

/// Quantile bins used when a numeric column enters a contingency table.
pub const NUMERIC_BINS: usize = 10;

/// Two-sample Kolmogorov–Smirnov statistic by merge scan.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = if x[i] <= y[j] { x[i] } else { y[j] };
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

fn frequencies(codes: &[usize], k: usize) -> Vec<f64> {
    let mut f = vec![0.0; k];
    codes.iter().for_each(|&c| f[c] += 1.0);
    let n = codes.len().max(1) as f64;
    f.iter_mut().for_each(|v| *v /= n);
    f
}

/// Total-variation distance between two discrete distributions.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Per-column similarity: `1 − KS` for numeric, `1 − TV` for categorical.
pub fn shape_columns(syn: &Table, real: &Table) -> Result<Vec<f64>> {
    syn.ensure_same_schema(real)?;
    if syn.n_rows() == 0 || real.n_rows() == 0 {
        return Err(Error::Data("shape needs non-empty tables".into()));
    }
    Ok(syn
        .columns()
        .iter()
        .zip(real.columns())
        .zip(&real.schema().columns)
        .map(|((a, b), spec)| match (a, b) {
            (ColumnData::Numeric(x), ColumnData::Numeric(y)) => 1.0 - ks_statistic(x, y),
            (ColumnData::Categorical(x), ColumnData::Categorical(y)) => {
                let k = spec.categories.len();
                1.0 - total_variation(&frequencies(x, k), &frequencies(y, k))
            }
            _ => unreachable!("schemas match"),
        })
        .collect())
}

pub fn shape(syn: &Table, real: &Table) -> Result<f64> {
    let cols = shape_columns(syn, real)?;
    Ok(cols.iter().sum::<f64>() / cols.len() as f64)
}

/// Pearson correlation; `None` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    /// Mean pair score; `None` when every pair was skipped.
    pub score: Option<f64>,
    pub pairs_scored: usize,
    /// Column pairs skipped because a numeric column was constant.
    pub skipped: Vec<String>,
}

/// Quantile bin edges over the pooled values of both tables.
fn pooled_edges(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = a.iter().chain(b).copied().collect();
    v.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..NUMERIC_BINS).map(|q| v[(q * v.len() / NUMERIC_BINS).min(v.len() - 1)]).collect();
    edges.dedup();
    edges
}

fn discretize(col: &ColumnData, other: &ColumnData, categories: usize) -> (Vec<usize>, Vec<usize>, usize) {
    match (col, other) {
        (ColumnData::Categorical(x), ColumnData::Categorical(y)) => (x.clone(), y.clone(), categories),
        (ColumnData::Numeric(x), ColumnData::Numeric(y)) => {
            let edges = pooled_edges(x, y);
            let bin = |v: &f64| edges.partition_point(|e| e <= v);
            (x.iter().map(bin).collect(), y.iter().map(bin).collect(), edges.len() + 1)
        }
        _ => unreachable!("schemas match"),
    }
}

fn joint(a: &[usize], b: &[usize], ka: usize, kb: usize) -> Vec<f64> {
    let mut t = vec![0.0; ka * kb];
    a.iter().zip(b).for_each(|(&i, &j)| t[i * kb + j] += 1.0);
    let n = a.len().max(1) as f64;
    t.iter_mut().for_each(|v| *v /= n);
    t
}

/// Mean pairwise-dependence agreement over all unordered column pairs.
pub fn trend(syn: &Table, real: &Table) -> Result<TrendReport> {
    syn.ensure_same_schema(real)?;
    let f = real.n_cols();
    if f < 2 {
        return Err(Error::Data("trend needs at least two columns".into()));
    }
    if syn.n_rows() < 2 || real.n_rows() < 2 {
        return Err(Error::Data("trend needs at least two rows per table".into()));
    }
    let schema = real.schema();
    let mut total = 0.0;
    let mut scored = 0;
    let mut skipped = Vec::new();
    for a in 0..f {
        for b in a + 1..f {
            let pair = match (syn.column(a), syn.column(b), real.column(a), real.column(b)) {
                (ColumnData::Numeric(sa), ColumnData::Numeric(sb), ColumnData::Numeric(ra), ColumnData::Numeric(rb)) => {
                    match (pearson(sa, sb), pearson(ra, rb)) {
                        (Some(ps), Some(pr)) => Some(1.0 - (ps - pr).abs() / 2.0),
                        _ => None,
                    }
                }
                _ => {
                    let (sa, ra, ka) = discretize(syn.column(a), real.column(a), schema.columns[a].categories.len());
                    let (sb, rb, kb) = discretize(syn.column(b), real.column(b), schema.columns[b].categories.len());
                    Some(1.0 - total_variation(&joint(&sa, &sb, ka, kb), &joint(&ra, &rb, ka, kb)))
                }
            };
            match pair {
                Some(s) => {
                    total += s;
                    scored += 1;
                }
                None => skipped.push(format!("{}~{}", schema.columns[a].name, schema.columns[b].name)),
            }
        }
    }
    Ok(TrendReport {
        score: (scored > 0).then(|| total / scored as f64),
        pairs_scored: scored,
        skipped,
    })
}
