use serde::{Deserialize, Serialize};

use crate::encdec::{Cell, ColumnData, ColumnKind, Table, TableSchema};
use crate::error::{Error, Result};

/// Mixed-type row distance: `|Δ|/scale` per numeric column, 0/1 mismatch per
/// categorical column, summed and divided by the column count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceConfig {
    /// Per-column numeric scale; ignored for categorical columns.
    pub scales: Vec<f64>,
    pub kinds: Vec<ColumnKind>,
}

impl DistanceConfig {
    /// Population std of each numeric column over the given tables; zero
    /// spread falls back to 1.
    pub fn fit(tables: &[&Table]) -> Result<Self> {
        let first = tables.first().ok_or_else(|| Error::Data("no tables to fit distances on".into()))?;
        for t in tables {
            first.ensure_same_schema(t)?;
        }
        let schema = first.schema();
        let mut scales = Vec::with_capacity(schema.len());
        for j in 0..schema.len() {
            let vals: Vec<f64> = tables
                .iter()
                .filter_map(|t| t.column(j).as_numeric())
                .flat_map(|v| v.iter().copied())
                .collect();
            if vals.is_empty() {
                scales.push(1.0);
                continue;
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            scales.push(if std > 0.0 && std.is_finite() { std } else { 1.0 });
        }
        Ok(Self {
            scales,
            kinds: schema.columns.iter().map(|c| c.kind).collect(),
        })
    }

    /// Unit scales for every column of `schema`.
    pub fn unit(schema: &TableSchema) -> Self {
        Self {
            scales: vec![1.0; schema.len()],
            kinds: schema.columns.iter().map(|c| c.kind).collect(),
        }
    }

    fn check(&self, schema: &TableSchema) -> Result<()> {
        let kinds: Vec<ColumnKind> = schema.columns.iter().map(|c| c.kind).collect();
        if kinds != self.kinds {
            return Err(Error::Schema("distance config does not match the table schema".into()));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.kinds.len()
    }
}

/// Row-major matrix of scaled cells ready for distance computations.
#[derive(Clone, Debug)]
pub struct PreparedRows {
    pub(crate) values: Vec<f64>,
    pub(crate) numeric: Vec<bool>,
    pub(crate) rows: usize,
}

impl PreparedRows {
    pub fn new(table: &Table, cfg: &DistanceConfig) -> Result<Self> {
        cfg.check(table.schema())?;
        let f = table.n_cols();
        let n = table.n_rows();
        let mut values = vec![0.0; n * f];
        for (j, col) in table.columns().iter().enumerate() {
            match col {
                ColumnData::Numeric(v) => v.iter().enumerate().for_each(|(i, x)| values[i * f + j] = x / cfg.scales[j]),
                ColumnData::Categorical(v) => v.iter().enumerate().for_each(|(i, c)| values[i * f + j] = *c as f64),
            }
        }
        Ok(Self {
            values,
            numeric: cfg.kinds.iter().map(|k| *k == ColumnKind::Numeric).collect(),
            rows: n,
        })
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let f = self.numeric.len();
        &self.values[i * f..(i + 1) * f]
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((x, y), &num) in a.iter().zip(b).zip(&self.numeric) {
            s += if num {
                (x - y).abs()
            } else if x != y {
                1.0
            } else {
                0.0
            };
        }
        s / self.numeric.len().max(1) as f64
    }

    /// Distance from `x` to its closest row.
    pub fn closest(&self, x: &[f64]) -> f64 {
        (0..self.rows).map(|i| self.distance(x, self.row(i))).fold(f64::INFINITY, f64::min)
    }
}

fn cells_to_values(cells: &[Cell], cfg: &DistanceConfig) -> Result<Vec<f64>> {
    if cells.len() != cfg.width() {
        return Err(Error::Schema(format!("row has {} cells, expected {}", cells.len(), cfg.width())));
    }
    cells
        .iter()
        .zip(&cfg.kinds)
        .zip(&cfg.scales)
        .map(|((c, k), s)| match (c, k) {
            (Cell::Num(v), ColumnKind::Numeric) => Ok(v / s),
            (Cell::Cat(c), ColumnKind::Categorical) => Ok(*c as f64),
            _ => Err(Error::Schema("row cell kinds do not match the schema".into())),
        })
        .collect()
}

/// Distance from `x` to the closest record of `data`.
pub fn dcr(x: &[Cell], data: &Table, cfg: &DistanceConfig) -> Result<f64> {
    if data.n_rows() == 0 {
        return Err(Error::Data("closest-record distance needs a non-empty reference table".into()));
    }
    let rows = PreparedRows::new(data, cfg)?;
    Ok(rows.closest(&cells_to_values(x, cfg)?))
}

/// Share `p` of synthetic rows strictly closer to train than to validation,
/// and the privacy score `min(1, 2(1 − p))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcrOverfit {
    pub p: f64,
    pub score: f64,
}

pub fn dcr_overfit(syn: &Table, train: &Table, val: &Table, cfg: &DistanceConfig) -> Result<DcrOverfit> {
    if syn.n_rows() == 0 || train.n_rows() == 0 || val.n_rows() == 0 {
        return Err(Error::Data("closest-record comparison needs non-empty tables".into()));
    }
    syn.ensure_same_schema(train)?;
    syn.ensure_same_schema(val)?;
    let s = PreparedRows::new(syn, cfg)?;
    let t = PreparedRows::new(train, cfg)?;
    let v = PreparedRows::new(val, cfg)?;
    let closer = (0..s.len()).filter(|&i| t.closest(s.row(i)) < v.closest(s.row(i))).count();
    let p = closer as f64 / s.len() as f64;
    Ok(DcrOverfit {
        p,
        score: dcr_overfit_score(p),
    })
}

pub fn dcr_overfit_score(p: f64) -> f64 {
    (2.0 * (1.0 - p)).min(1.0)
}
