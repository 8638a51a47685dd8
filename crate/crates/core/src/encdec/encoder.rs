use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::stats::ColumnStats;
use super::table::{ColumnData, Table};
use crate::error::{Error, Result};
use crate::ndnum::Tensor;
use crate::scalar::Scalar;
use crate::seeds;

/// Maps a `(context, query)` pair of tables to `(M, F, d)` latent tensors.
pub trait Encoder<T: Scalar> {
    fn latent_dim(&self) -> usize;

    fn encode(&self, ctx: &Table, qry: &Table, stats: &ColumnStats) -> Result<(Tensor<T>, Tensor<T>)>;
}

const ROLE_SLOPE: u64 = 0;
const ROLE_OFFSET: u64 = 1;
const ROLE_CATEGORY: u64 = 2;

/// Seeded per-cell embedder.
///
/// A numeric cell with standardized value `v` in column `f` becomes
/// `v·u_f + b_f`; a categorical cell with category `c` becomes `e_{f,c}`.
/// Every key vector is a Gaussian draw rescaled to RMS `scale`, seeded only by
/// `(seed, column index, role)`, so equal keys agree across datasets.
#[derive(Clone, Debug, PartialEq)]
pub struct DefaultEncoder {
    pub seed: u64,
    pub latent_dim: usize,
    pub scale: f64,
}

impl DefaultEncoder {
    pub fn new(seed: u64, latent_dim: usize) -> Self {
        Self {
            seed,
            latent_dim,
            scale: 0.5,
        }
    }

    /// Key vector for `(column, role)`; never the zero vector.
    pub fn key(&self, column: usize, role: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(self.seed, &[column as u64, role]));
        loop {
            let v: Vec<f64> = (0..self.latent_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let rms = (v.iter().map(|x| x * x).sum::<f64>() / self.latent_dim as f64).sqrt();
            if rms > 1e-12 {
                return v.into_iter().map(|x| x * self.scale / rms).collect();
            }
        }
    }

    pub fn slope(&self, column: usize) -> Vec<f64> {
        self.key(column, ROLE_SLOPE)
    }

    pub fn offset(&self, column: usize) -> Vec<f64> {
        self.key(column, ROLE_OFFSET)
    }

    pub fn category(&self, column: usize, category: usize) -> Vec<f64> {
        self.key(column, ROLE_CATEGORY + category as u64)
    }

    /// Encodes every row of one table.
    pub fn encode_table<T: Scalar>(&self, table: &Table, stats: &ColumnStats) -> Result<Tensor<T>> {
        let (m, f, d) = (table.n_rows(), table.n_cols(), self.latent_dim);
        if stats.columns.len() != f {
            return Err(Error::Schema(format!("statistics cover {} columns, table has {f}", stats.columns.len())));
        }
        let mut out = Tensor::zeros(vec![m, f, d]);
        let data = out.data_mut();
        for (j, col) in table.columns().iter().enumerate() {
            match col {
                ColumnData::Numeric(values) => {
                    let (u, b) = (self.slope(j), self.offset(j));
                    for (i, &x) in values.iter().enumerate() {
                        let v = stats.standardize(j, x);
                        let cell = &mut data[(i * f + j) * d..(i * f + j + 1) * d];
                        for k in 0..d {
                            cell[k] = T::lit(v * u[k] + b[k]);
                        }
                    }
                }
                ColumnData::Categorical(values) => {
                    let n_cat = table.schema().columns[j].categories.len();
                    let book: Vec<Vec<f64>> = (0..n_cat).map(|c| self.category(j, c)).collect();
                    for (i, &c) in values.iter().enumerate() {
                        let cell = &mut data[(i * f + j) * d..(i * f + j + 1) * d];
                        for k in 0..d {
                            cell[k] = T::lit(book[c][k]);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

impl<T: Scalar> Encoder<T> for DefaultEncoder {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn encode(&self, ctx: &Table, qry: &Table, stats: &ColumnStats) -> Result<(Tensor<T>, Tensor<T>)> {
        ctx.ensure_same_schema(qry)?;
        Ok((self.encode_table(ctx, stats)?, self.encode_table(qry, stats)?))
    }
}
