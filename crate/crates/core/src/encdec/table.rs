use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub target: bool,
}

impl ColumnSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numeric,
            categories: Vec::new(),
            target: false,
        }
    }

    pub fn categorical(name: impl Into<String>, categories: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical,
            categories: categories.iter().map(|c| c.to_string()).collect(),
            target: false,
        }
    }

    pub fn as_target(mut self) -> Self {
        self.target = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub columns: Vec<ColumnSpec>,
}

impl TableSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let s = Self { columns };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name {:?}", c.name)));
            }
            match c.kind {
                ColumnKind::Categorical if c.categories.len() < 2 => {
                    return Err(Error::Schema(format!(
                        "categorical column {:?} needs at least 2 categories",
                        c.name
                    )))
                }
                ColumnKind::Numeric if !c.categories.is_empty() => {
                    return Err(Error::Schema(format!("numeric column {:?} lists categories", c.name)))
                }
                _ => {}
            }
            let mut cats = HashSet::new();
            if let Some(dup) = c.categories.iter().find(|x| !cats.insert(x.as_str())) {
                return Err(Error::Schema(format!("column {:?} repeats category {dup:?}", c.name)));
            }
        }
        let targets = self.columns.iter().filter(|c| c.target).count();
        if targets != 1 {
            return Err(Error::Schema(format!("expected exactly one target column, found {targets}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn target_index(&self) -> usize {
        self.columns.iter().position(|c| c.target).expect("validated schema has a target")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// One column's cells: raw numbers, or indices into the category list.
#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical(Vec<usize>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell(&self, row: usize) -> Cell {
        match self {
            ColumnData::Numeric(v) => Cell::Num(v[row]),
            ColumnData::Categorical(v) => Cell::Cat(v[row]),
        }
    }

    fn select(&self, rows: &[usize]) -> Self {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical(v) => ColumnData::Categorical(rows.iter().map(|&r| v[r]).collect()),
        }
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match self {
            ColumnData::Numeric(v) => Some(v),
            ColumnData::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&[usize]> {
        match self {
            ColumnData::Categorical(v) => Some(v),
            ColumnData::Numeric(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Cat(usize),
}

/// Column-major heterogeneous table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    schema: TableSchema,
    columns: Vec<ColumnData>,
    rows: usize,
}

impl Table {
    pub fn new(schema: TableSchema, columns: Vec<ColumnData>) -> Result<Self> {
        schema.validate()?;
        if columns.len() != schema.len() {
            return Err(Error::Schema(format!(
                "schema has {} columns, data has {}",
                schema.len(),
                columns.len()
            )));
        }
        let rows = columns.first().map_or(0, ColumnData::len);
        for (spec, col) in schema.columns.iter().zip(&columns) {
            if col.len() != rows {
                return Err(Error::Data(format!("column {:?} has {} rows, expected {rows}", spec.name, col.len())));
            }
            match (spec.kind, col) {
                (ColumnKind::Numeric, ColumnData::Numeric(v)) => {
                    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                        return Err(Error::Data(format!("column {:?} has non-finite value {bad}", spec.name)));
                    }
                }
                (ColumnKind::Categorical, ColumnData::Categorical(v)) => {
                    if let Some(&bad) = v.iter().find(|&&c| c >= spec.categories.len()) {
                        return Err(Error::Data(format!("column {:?} has category index {bad}", spec.name)));
                    }
                }
                _ => return Err(Error::Schema(format!("column {:?} kind does not match its data", spec.name))),
            }
        }
        Ok(Self { schema, columns, rows })
    }

    /// Zero-row table with the given schema.
    pub fn empty(schema: TableSchema) -> Result<Self> {
        let columns = schema
            .columns
            .iter()
            .map(|c| match c.kind {
                ColumnKind::Numeric => ColumnData::Numeric(Vec::new()),
                ColumnKind::Categorical => ColumnData::Categorical(Vec::new()),
            })
            .collect();
        Self::new(schema, columns)
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn columns(&self) -> &[ColumnData] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &ColumnData {
        &self.columns[i]
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> Vec<Cell> {
        self.columns.iter().map(|c| c.cell(i)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            rows: rows.len(),
        }
    }

    /// Reorders columns: output column `i` is input column `order[i]`.
    pub fn reorder_columns(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.n_cols()];
        for &o in order {
            if o >= seen.len() || std::mem::replace(&mut seen[o], true) {
                return Err(Error::Contract(format!("{order:?} is not a column permutation")));
            }
        }
        if order.len() != self.n_cols() {
            return Err(Error::Contract(format!("{order:?} is not a column permutation")));
        }
        let schema = TableSchema {
            columns: order.iter().map(|&o| self.schema.columns[o].clone()).collect(),
        };
        Ok(Self {
            schema,
            columns: order.iter().map(|&o| self.columns[o].clone()).collect(),
            rows: self.rows,
        })
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Table) -> Result<Self> {
        if self.schema != other.schema {
            return Err(Error::Schema("cannot concatenate tables with different schemas".into()));
        }
        let columns = self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| match (a, b) {
                (ColumnData::Numeric(x), ColumnData::Numeric(y)) => ColumnData::Numeric([x.as_slice(), y].concat()),
                (ColumnData::Categorical(x), ColumnData::Categorical(y)) => {
                    ColumnData::Categorical([x.as_slice(), y].concat())
                }
                _ => unreachable!("schemas match"),
            })
            .collect();
        Self::new(self.schema.clone(), columns)
    }

    pub fn ensure_same_schema(&self, other: &Table) -> Result<()> {
        if self.schema == other.schema {
            Ok(())
        } else {
            Err(Error::Schema("tables do not share a schema".into()))
        }
    }

    /// Parses CSV text with a header row matching the schema's column names.
    pub fn from_csv_reader<R: std::io::Read>(schema: TableSchema, reader: R) -> Result<Self> {
        schema.validate()?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let names: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
        if header != names {
            return Err(Error::Schema(format!("CSV header {header:?} does not match schema {names:?}")));
        }
        let mut columns: Vec<ColumnData> = schema
            .columns
            .iter()
            .map(|c| match c.kind {
                ColumnKind::Numeric => ColumnData::Numeric(Vec::new()),
                ColumnKind::Categorical => ColumnData::Categorical(Vec::new()),
            })
            .collect();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != schema.len() {
                return Err(Error::Data(format!("row {} has {} fields", line + 1, rec.len())));
            }
            for ((field, spec), col) in rec.iter().zip(&schema.columns).zip(columns.iter_mut()) {
                if field.is_empty() {
                    return Err(Error::Data(format!("row {}: missing value in {:?}", line + 1, spec.name)));
                }
                match col {
                    ColumnData::Numeric(v) => v.push(field.trim().parse::<f64>().map_err(|e| {
                        Error::Data(format!("row {}: {:?} in {:?}: {e}", line + 1, field, spec.name))
                    })?),
                    ColumnData::Categorical(v) => {
                        let idx = spec.categories.iter().position(|c| c == field).ok_or_else(|| {
                            Error::Data(format!("row {}: unknown category {field:?} in {:?}", line + 1, spec.name))
                        })?;
                        v.push(idx);
                    }
                }
            }
        }
        Self::new(schema, columns)
    }

    pub fn read_csv(csv_path: &Path, schema_path: &Path) -> Result<Self> {
        let schema = TableSchema::load(schema_path)?;
        let t = Self::from_csv_reader(schema, fs::File::open(csv_path)?)?;
        if t.n_rows() == 0 {
            return Err(Error::Data(format!("{} has no rows", csv_path.display())));
        }
        Ok(t)
    }

    pub fn to_csv_writer<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.schema.columns.iter().map(|c| c.name.as_str()))?;
        for r in 0..self.rows {
            let rec: Vec<String> = self
                .columns
                .iter()
                .zip(&self.schema.columns)
                .map(|(col, spec)| match col.cell(r) {
                    Cell::Num(v) => format!("{v}"),
                    Cell::Cat(c) => spec.categories[c].clone(),
                })
                .collect();
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `<stem>.csv` content to `csv_path` and the schema beside it.
    pub fn write_csv(&self, csv_path: &Path, schema_path: &Path) -> Result<()> {
        self.to_csv_writer(fs::File::create(csv_path)?)?;
        self.schema.save(schema_path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> TableSchema {
        TableSchema::new(vec![
            ColumnSpec::numeric("x"),
            ColumnSpec::categorical("color, hue", &["red", "blue"]),
            ColumnSpec::numeric("y").as_target(),
        ])
        .unwrap()
    }

    #[test]
    fn schema_rules() {
        assert!(TableSchema::new(vec![ColumnSpec::numeric("a"), ColumnSpec::numeric("a").as_target()]).is_err());
        assert!(TableSchema::new(vec![ColumnSpec::numeric("a")]).is_err());
        assert!(TableSchema::new(vec![ColumnSpec::categorical("c", &["only"]).as_target()]).is_err());
        assert!(TableSchema::new(vec![
            ColumnSpec::numeric("a").as_target(),
            ColumnSpec::numeric("b").as_target()
        ])
        .is_err());
    }

    #[test]
    fn csv_round_trip_with_quoting() {
        let t = Table::new(
            schema(),
            vec![
                ColumnData::Numeric(vec![1.5, -0.25, 1e-7]),
                ColumnData::Categorical(vec![1, 0, 1]),
                ColumnData::Numeric(vec![3.0, 4.0, 0.1]),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        t.to_csv_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,\"color, hue\",y\n"), "{text}");
        let back = Table::from_csv_reader(schema(), buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_rejections() {
        let bad_cat = "x,\"color, hue\",y\n1,green,2\n";
        assert!(Table::from_csv_reader(schema(), bad_cat.as_bytes()).is_err());
        let missing = "x,\"color, hue\",y\n,red,2\n";
        assert!(Table::from_csv_reader(schema(), missing.as_bytes()).is_err());
        let header = "a,b,c\n1,red,2\n";
        assert!(Table::from_csv_reader(schema(), header.as_bytes()).is_err());
    }

    #[test]
    fn reorder_and_select() {
        let t = Table::new(
            schema(),
            vec![
                ColumnData::Numeric(vec![1.0, 2.0]),
                ColumnData::Categorical(vec![0, 1]),
                ColumnData::Numeric(vec![5.0, 6.0]),
            ],
        )
        .unwrap();
        let r = t.reorder_columns(&[2, 0, 1]).unwrap();
        assert_eq!(r.schema().columns[0].name, "y");
        assert_eq!(r.schema().target_index(), 0);
        assert!(t.reorder_columns(&[0, 0, 1]).is_err());
        let s = t.select_rows(&[1]);
        assert_eq!(s.row(0), vec![Cell::Num(2.0), Cell::Cat(1), Cell::Num(6.0)]);
        assert_eq!(t.concat(&s).unwrap().n_rows(), 3);
        assert_eq!(Table::empty(schema()).unwrap().n_rows(), 0);
    }
}
