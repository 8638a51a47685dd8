use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stats::ColumnStats;
use super::table::{ColumnData, ColumnKind, Table, TableSchema};
use crate::error::{Error, Result};
use crate::ndnum::{adam_step, dropout_mask, AdamConfig, AdamState, CosineSchedule, Graph, Tensor, Var};
use crate::scalar::Scalar;
use crate::seeds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl DecoderConfig {
    pub fn desk() -> Self {
        Self {
            hidden: 128,
            epochs: 200,
            lr: 1e-3,
            dropout: 0.1,
            batch_size: 64,
            seed: 0,
        }
    }

    pub fn paper() -> Self {
        Self {
            hidden: 768,
            epochs: 2000,
            lr: 2e-5,
            ..Self::desk()
        }
    }
}

/// Two-hidden-layer ReLU MLP from one feature's latent slice to its value
/// (numeric) or category logits (categorical).
#[derive(Clone, Debug)]
pub struct FeatureDecoder<T> {
    pub column: usize,
    pub kind: ColumnKind,
    pub dropout: f64,
    params: Vec<Tensor<T>>,
}

impl<T: Scalar> FeatureDecoder<T> {
    pub fn new(column: usize, kind: ColumnKind, latent_dim: usize, hidden: usize, outputs: usize, dropout: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [(latent_dim, hidden), (hidden, hidden), (hidden, outputs)];
        let mut params = Vec::with_capacity(6);
        for (i, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let gain = if i < 2 { 2.0 } else { 1.0 };
            params.push(Tensor::randn(vec![fan_in, fan_out], (gain / fan_in as f64).sqrt(), &mut rng));
            params.push(Tensor::zeros(vec![fan_out]));
        }
        Self {
            column,
            kind,
            dropout,
            params,
        }
    }

    pub fn outputs(&self) -> usize {
        self.params[5].len()
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    /// Forward pass; dropout is applied only when `rng` is given.
    pub fn forward_graph(&self, g: &mut Graph<T>, p: &[Var], x: Var, mut rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let mut h = x;
        for layer in 0..3 {
            h = g.linear(h, p[2 * layer], p[2 * layer + 1])?;
            if layer < 2 {
                h = g.relu(h);
                if let Some(r) = rng.as_deref_mut() {
                    if self.dropout > 0.0 {
                        let m = g.constant(dropout_mask(g.shape(h), self.dropout, r));
                        h = g.mul(h, m)?;
                    }
                }
            }
        }
        Ok(h)
    }

    /// Evaluation-mode outputs for `(K, d)` inputs.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p: Vec<Var> = self.params.iter().map(|t| g.constant(t.clone())).collect();
        let xv = g.constant(x.clone());
        let out = self.forward_graph(&mut g, &p, xv, None)?;
        Ok(g.value(out).clone())
    }
}

/// Per-column decoders plus each column's final training loss.
#[derive(Clone, Debug)]
pub struct TrainedDecoders<T> {
    pub decoders: Vec<FeatureDecoder<T>>,
    pub losses: Vec<f64>,
}

/// `(M, d)` latent slice of column `f` from an `(M, F, d)` tensor.
pub fn column_slice<T: Scalar>(z: &Tensor<T>, f: usize) -> Tensor<T> {
    let (m, nf, d) = (z.shape()[0], z.shape()[1], z.shape()[2]);
    let mut out = Vec::with_capacity(m * d);
    for i in 0..m {
        out.extend_from_slice(&z.data()[(i * nf + f) * d..(i * nf + f + 1) * d]);
    }
    Tensor::new(vec![m, d], out).expect("slice shape")
}

enum Targets<T> {
    Numeric(Tensor<T>),
    Classes(Vec<usize>),
}

fn loss_graph<T: Scalar>(
    dec: &FeatureDecoder<T>,
    g: &mut Graph<T>,
    p: &[Var],
    x: &Tensor<T>,
    targets: &Targets<T>,
    rows: &[usize],
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    let xv = g.constant(x.select0(rows)?);
    let out = dec.forward_graph(g, p, xv, rng)?;
    match targets {
        Targets::Numeric(y) => {
            let yv = g.constant(y.select0(rows)?);
            let diff = g.sub(out, yv)?;
            let sq = g.square(diff);
            Ok(g.mean(sq))
        }
        Targets::Classes(c) => {
            let sel: Vec<usize> = rows.iter().map(|&r| c[r]).collect();
            g.cross_entropy(out, &sel)
        }
    }
}

fn eval_loss<T: Scalar>(dec: &FeatureDecoder<T>, x: &Tensor<T>, targets: &Targets<T>) -> Result<f64> {
    let mut g = Graph::new();
    let p: Vec<Var> = dec.params.iter().map(|t| g.constant(t.clone())).collect();
    let rows: Vec<usize> = (0..x.shape()[0]).collect();
    let l = loss_graph(dec, &mut g, &p, x, targets, &rows, None)?;
    Ok(g.value(l).item().as_f64())
}

/// Fits one decoder per column on the query latents and query rows.
///
/// Numeric columns regress the standardized value under squared error;
/// categorical columns minimize cross-entropy over their categories.
pub fn train_decoders<T: Scalar>(
    z_qry: &Tensor<T>,
    qry: &Table,
    stats: &ColumnStats,
    config: &DecoderConfig,
) -> Result<TrainedDecoders<T>> {
    if z_qry.ndim() != 3 || z_qry.shape()[0] != qry.n_rows() || z_qry.shape()[1] != qry.n_cols() {
        return Err(Error::shape("train_decoders", z_qry.shape(), &[qry.n_rows(), qry.n_cols()]));
    }
    if qry.n_rows() < 2 {
        return Err(Error::Data("decoder training needs at least two query rows".into()));
    }
    let d = z_qry.shape()[2];
    let m = qry.n_rows();
    let mut decoders = Vec::with_capacity(qry.n_cols());
    let mut losses = Vec::with_capacity(qry.n_cols());
    for (f, (col, spec)) in qry.columns().iter().zip(&qry.schema().columns).enumerate() {
        let col_seed = seeds::derive(config.seed, &[f as u64]);
        let (targets, outputs) = match col {
            ColumnData::Numeric(v) => {
                let y = Tensor::from_fn(vec![m, 1], |i| T::lit(stats.standardize(f, v[i])));
                (Targets::Numeric(y), 1)
            }
            ColumnData::Categorical(v) => (Targets::Classes(v.clone()), spec.categories.len()),
        };
        let mut dec = FeatureDecoder::new(f, spec.kind, d, config.hidden, outputs, config.dropout, col_seed);
        let x = column_slice(z_qry, f);
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(col_seed, &[1]));
        let mut state = AdamState::new(&dec.params);
        let adam = AdamConfig::default();
        let mut order: Vec<usize> = (0..m).collect();
        let batch = config.batch_size.max(1);
        let sched = CosineSchedule::new(config.lr, 0.0, (config.epochs * m.div_ceil(batch)) as u64);
        let mut step = 0u64;
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for rows in order.chunks(batch) {
                let mut g = Graph::new();
                let p: Vec<Var> = dec.params.iter().map(|t| g.param(t.clone())).collect();
                let loss = loss_graph(&dec, &mut g, &p, &x, &targets, rows, Some(&mut rng))?;
                let lv = g.value(loss).item().as_f64();
                if !lv.is_finite() {
                    return Err(Error::Numerical(format!("decoder for column {f} ({:?}) diverged", spec.name)));
                }
                let grads = crate::ndnum::reverse_grad(&g, loss, &p)?;
                adam_step(&mut dec.params, &grads, &mut state, sched.lr(step), &adam)?;
                step += 1;
            }
        }
        let final_loss = eval_loss(&dec, &x, &targets)?;
        if !final_loss.is_finite() {
            return Err(Error::Numerical(format!("decoder for column {f} ({:?}) diverged", spec.name)));
        }
        decoders.push(dec);
        losses.push(final_loss);
    }
    Ok(TrainedDecoders { decoders, losses })
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax_lowest<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Maps generated latents back to a table with `schema`.
pub fn decode<T: Scalar>(
    z0: &Tensor<T>,
    decoders: &[FeatureDecoder<T>],
    stats: &ColumnStats,
    schema: &TableSchema,
) -> Result<Table> {
    if z0.ndim() != 3 || z0.shape()[1] != schema.len() || decoders.len() != schema.len() {
        return Err(Error::shape("decode", z0.shape(), &[schema.len()]));
    }
    let k = z0.shape()[0];
    if k == 0 {
        return Table::empty(schema.clone());
    }
    let mut columns = Vec::with_capacity(schema.len());
    for (f, (dec, spec)) in decoders.iter().zip(&schema.columns).enumerate() {
        let out = dec.predict(&column_slice(z0, f))?;
        let width = out.shape()[1];
        columns.push(match spec.kind {
            ColumnKind::Numeric => {
                ColumnData::Numeric(out.data().iter().map(|v| stats.destandardize(f, v.as_f64())).collect())
            }
            ColumnKind::Categorical => {
                if width != spec.categories.len() {
                    return Err(Error::shape("decode logits", &[width], &[spec.categories.len()]));
                }
                ColumnData::Categorical(out.data().chunks(width).map(argmax_lowest).collect())
            }
        });
    }
    Table::new(schema.clone(), columns)
}
