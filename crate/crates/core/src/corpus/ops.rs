use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encdec::Table;
use crate::error::{Error, Result};
use crate::ndnum::Tensor;
use crate::scalar::Scalar;
use crate::seeds;

/// Default number of structural variants per dataset.
pub const DEFAULT_VARIANTS: usize = 5;
/// Default query cap per pretraining task.
pub const DEFAULT_QUERY_CAP: usize = 128;
/// Default context ratio at inference.
pub const DEFAULT_CONTEXT_RATIO: f64 = 0.3;

// Guards floor(r·N) against products like 0.29 * 100 = 28.999999999999996.
const FLOOR_SLACK: f64 = 1e-9;

fn floor_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + FLOOR_SLACK).floor() as usize
}

/// `k` row-and-column permutations of `table`. The target column keeps its
/// position; the other columns are shuffled among the remaining positions.
pub fn permutation_variants(table: &Table, k: usize, seed: u64) -> Result<Vec<Table>> {
    if k == 0 {
        return Err(Error::Config("permutation_variants needs k >= 1".into()));
    }
    let target = table.schema().target_index();
    (0..k)
        .map(|v| {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, &[v as u64]));
            let mut rows: Vec<usize> = (0..table.n_rows()).collect();
            rows.shuffle(&mut rng);
            let mut others: Vec<usize> = (0..table.n_cols()).filter(|&c| c != target).collect();
            others.shuffle(&mut rng);
            others.insert(target, target);
            table.select_rows(&rows).reorder_columns(&others)
        })
        .collect()
}

/// Structural variants for one corpus entry: `k` random permutations, or the
/// untouched table alone when permutation is disabled.
pub fn expand_variants(table: &Table, k: usize, permute: bool, seed: u64) -> Result<Vec<Table>> {
    if permute {
        permutation_variants(table, k, seed)
    } else {
        Ok(vec![table.clone()])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub context_ratio: f64,
    pub seed: u64,
}

/// Row indices `(context, query)` of a random partition of `n` rows with
/// `floor(r·n)` context rows.
pub fn split_indices(n: usize, split: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let r = split.context_ratio;
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Config(format!("context ratio must lie in (0, 1), got {r}")));
    }
    let m_ctx = floor_count(r, n);
    if m_ctx == 0 || m_ctx >= n {
        return Err(Error::Data(format!(
            "context ratio {r} on {n} rows leaves an empty side ({m_ctx} context, {} query)",
            n.saturating_sub(m_ctx)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(split.seed);
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng);
    let qry = rows.split_off(m_ctx);
    Ok((rows, qry))
}

pub fn split_context_query(table: &Table, split: &SplitSpec) -> Result<(Table, Table)> {
    let (ctx, qry) = split_indices(table.n_rows(), split)?;
    Ok((table.select_rows(&ctx), table.select_rows(&qry)))
}

/// Containers whose leading axis indexes rows.
pub trait RowSelect: Sized {
    fn row_count(&self) -> usize;
    fn take_rows(&self, rows: &[usize]) -> Self;
}

impl RowSelect for Table {
    fn row_count(&self) -> usize {
        self.n_rows()
    }

    fn take_rows(&self, rows: &[usize]) -> Self {
        self.select_rows(rows)
    }
}

impl<T: Scalar> RowSelect for Tensor<T> {
    fn row_count(&self) -> usize {
        self.shape().first().copied().unwrap_or(0)
    }

    fn take_rows(&self, rows: &[usize]) -> Self {
        self.select0(rows).expect("indices drawn below the row count")
    }
}

/// Sorted indices of a uniform subsample of size `min(n, cap)`.
pub fn cap_indices(n: usize, cap: usize, seed: u64) -> Result<Vec<usize>> {
    if cap == 0 {
        return Err(Error::Config("query cap must be at least 1".into()));
    }
    if n <= cap {
        return Ok((0..n).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, cap).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Returns `qry` unchanged when it has at most `cap` rows, otherwise a
/// uniform subsample of `cap` rows without replacement.
pub fn cap_query<R: RowSelect + Clone>(qry: &R, cap: usize, seed: u64) -> Result<R> {
    let n = qry.row_count();
    if n <= cap && cap > 0 {
        return Ok(qry.clone());
    }
    Ok(qry.take_rows(&cap_indices(n, cap, seed)?))
}

/// Uniform subsample of `floor(ratio·N)` rows without replacement.
pub fn subsample_training(table: &Table, ratio: f64, seed: u64) -> Result<Table> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!("subsample ratio must lie in (0, 1], got {ratio}")));
    }
    let n = table.n_rows();
    let m = floor_count(ratio, n).min(n);
    if m < 2 {
        return Err(Error::Data(format!("subsample ratio {ratio} on {n} rows keeps fewer than 2 rows")));
    }
    if m == n {
        return Ok(table.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    Ok(table.select_rows(&idx))
}
