use serde::{Deserialize, Serialize};

use super::table::{ColumnData, Table};
use crate::error::{Error, Result};

/// Standardization statistics for one column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ColumnStat {
    Numeric { mean: f64, std: f64 },
    Categorical { frequencies: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub columns: Vec<ColumnStat>,
}

impl ColumnStats {
    pub fn standardize(&self, column: usize, value: f64) -> f64 {
        match self.columns[column] {
            ColumnStat::Numeric { mean, std } => (value - mean) / std,
            ColumnStat::Categorical { .. } => panic!("column {column} is categorical"),
        }
    }

    pub fn destandardize(&self, column: usize, z: f64) -> f64 {
        match self.columns[column] {
            ColumnStat::Numeric { mean, std } => z * std + mean,
            ColumnStat::Categorical { .. } => panic!("column {column} is categorical"),
        }
    }
}

/// Population mean/std per numeric column and category frequencies.
pub fn fit_stats(table: &Table) -> Result<ColumnStats> {
    if table.n_rows() == 0 {
        return Err(Error::Data("cannot fit statistics on an empty table".into()));
    }
    let n = table.n_rows() as f64;
    let columns = table
        .columns()
        .iter()
        .zip(&table.schema().columns)
        .map(|(col, spec)| match col {
            ColumnData::Numeric(v) => {
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                let std = var.sqrt();
                if std <= 0.0 || !std.is_finite() {
                    return Err(Error::Data(format!("numeric column {:?} has zero variance", spec.name)));
                }
                Ok(ColumnStat::Numeric { mean, std })
            }
            ColumnData::Categorical(v) => {
                let mut freq = vec![0.0; spec.categories.len()];
                for &c in v {
                    freq[c] += 1.0;
                }
                freq.iter_mut().for_each(|f| *f /= n);
                Ok(ColumnStat::Categorical { frequencies: freq })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ColumnStats { columns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encdec::{ColumnSpec, TableSchema};

    #[test]
    fn numeric_and_categorical() {
        let schema = TableSchema::new(vec![
            ColumnSpec::numeric("x"),
            ColumnSpec::categorical("c", &["a", "b"]).as_target(),
        ])
        .unwrap();
        let t = Table::new(
            schema.clone(),
            vec![ColumnData::Numeric(vec![1.0, 2.0, 3.0]), ColumnData::Categorical(vec![0, 0, 1])],
        )
        .unwrap();
        let s = fit_stats(&t).unwrap();
        match s.columns[0] {
            ColumnStat::Numeric { mean, std } => {
                assert!((mean - 2.0).abs() < 1e-15);
                assert!((std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
                assert!((std - 0.8165).abs() < 1e-4);
            }
            _ => panic!(),
        }
        assert_eq!(s.columns[1], ColumnStat::Categorical { frequencies: vec![2.0 / 3.0, 1.0 / 3.0] });

        let constant = Table::new(
            schema,
            vec![ColumnData::Numeric(vec![4.0, 4.0]), ColumnData::Categorical(vec![0, 1])],
        )
        .unwrap();
        let err = fit_stats(&constant).unwrap_err().to_string();
        assert!(err.contains("\"x\""), "{err}");
    }
}
