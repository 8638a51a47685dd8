use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::encdec::{ColumnData, Table};
use crate::error::{Error, Result};

pub const BOOSTING_ROUNDS: usize = 100;
pub const BOOSTING_LR: f64 = 0.1;
/// L2 penalty on stump leaf values and on linear weights.
pub const LEAF_L2: f64 = 1.0;
pub const RIDGE_L2: f64 = 1.0;
const NEWTON_ITERS: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    /// Gradient-boosted depth-1 trees.
    BoostedStumps,
    /// Ridge-regularized linear (regression) or logistic (classification) model.
    Linear,
}

impl Learner {
    pub const ALL: [Learner; 2] = [Learner::BoostedStumps, Learner::Linear];

    pub fn name(self) -> &'static str {
        match self {
            Learner::BoostedStumps => "boosted_stumps",
            Learner::Linear => "linear",
        }
    }
}

impl std::str::FromStr for Learner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boosted_stumps" => Ok(Learner::BoostedStumps),
            "linear" => Ok(Learner::Linear),
            _ => Err(Error::Config(format!("unknown learner {s:?} (expected boosted_stumps or linear)"))),
        }
    }
}

/// Dense row-major design matrix.
#[derive(Clone, Debug)]
pub struct Design {
    pub x: Vec<f64>,
    pub n: usize,
    pub p: usize,
}

impl Design {
    fn get(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.p + j]
    }

    fn to_matrix_with_intercept(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.p + 1, |i, j| if j == self.p { 1.0 } else { self.get(i, j) })
    }
}

/// Maps non-target columns to features: standardized numerics (training
/// statistics) and one-hot categoricals.
#[derive(Clone, Debug)]
pub struct FeatureMap {
    columns: Vec<(usize, Encoding)>,
    width: usize,
}

#[derive(Clone, Debug)]
enum Encoding {
    Numeric { mean: f64, std: f64 },
    OneHot { categories: usize },
}

impl FeatureMap {
    pub fn fit(train: &Table) -> Self {
        let target = train.schema().target_index();
        let mut columns = Vec::new();
        let mut width = 0;
        for (j, col) in train.columns().iter().enumerate() {
            if j == target {
                continue;
            }
            let enc = match col {
                ColumnData::Numeric(v) => {
                    let n = v.len().max(1) as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
                    width += 1;
                    Encoding::Numeric {
                        mean,
                        std: if std > 0.0 { std } else { 1.0 },
                    }
                }
                ColumnData::Categorical(_) => {
                    let k = train.schema().columns[j].categories.len();
                    width += k;
                    Encoding::OneHot { categories: k }
                }
            };
            columns.push((j, enc));
        }
        Self { columns, width }
    }

    pub fn transform(&self, table: &Table) -> Design {
        let n = table.n_rows();
        let mut x = vec![0.0; n * self.width];
        let mut offset = 0;
        for (j, enc) in &self.columns {
            match (enc, table.column(*j)) {
                (Encoding::Numeric { mean, std }, ColumnData::Numeric(v)) => {
                    v.iter().enumerate().for_each(|(i, a)| x[i * self.width + offset] = (a - mean) / std);
                    offset += 1;
                }
                (Encoding::OneHot { categories }, ColumnData::Categorical(v)) => {
                    v.iter().enumerate().for_each(|(i, c)| x[i * self.width + offset + c] = 1.0);
                    offset += categories;
                }
                _ => unreachable!("schemas match"),
            }
        }
        Design { x, n, p: self.width }
    }
}

#[derive(Clone, Copy, Debug)]
struct Stump {
    feature: usize,
    threshold: f64,
    left: f64,
    right: f64,
}

/// Additive stump model on a raw score scale.
#[derive(Clone, Debug)]
pub struct BoostedStumps {
    base: f64,
    stumps: Vec<Stump>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Loss {
    Squared,
    Logistic,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl BoostedStumps {
    /// Fits `rounds` Newton-boosted stumps; `y` holds targets (squared loss)
    /// or 0/1 labels (logistic loss).
    pub fn fit(d: &Design, y: &[f64], loss: Loss, rounds: usize, lr: f64) -> Self {
        let n = d.n;
        let base = match loss {
            Loss::Squared => y.iter().sum::<f64>() / n as f64,
            Loss::Logistic => {
                let p = (y.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
                (p / (1.0 - p)).ln()
            }
        };
        let sorted: Vec<Vec<usize>> = (0..d.p)
            .map(|j| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| d.get(a, j).total_cmp(&d.get(b, j)));
                idx
            })
            .collect();
        let mut f = vec![base; n];
        let mut stumps = Vec::with_capacity(rounds);
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        for _ in 0..rounds {
            for i in 0..n {
                match loss {
                    Loss::Squared => {
                        g[i] = y[i] - f[i];
                        h[i] = 1.0;
                    }
                    Loss::Logistic => {
                        let p = sigmoid(f[i]);
                        g[i] = y[i] - p;
                        h[i] = (p * (1.0 - p)).max(1e-12);
                    }
                }
            }
            let (gt, ht): (f64, f64) = (g.iter().sum(), h.iter().sum());
            let mut best: Option<(f64, Stump)> = None;
            for (j, idx) in sorted.iter().enumerate() {
                let (mut gl, mut hl) = (0.0, 0.0);
                for w in 0..n.saturating_sub(1) {
                    let i = idx[w];
                    gl += g[i];
                    hl += h[i];
                    let (a, b) = (d.get(i, j), d.get(idx[w + 1], j));
                    if a == b {
                        continue;
                    }
                    let (gr, hr) = (gt - gl, ht - hl);
                    let gain = gl * gl / (hl + LEAF_L2) + gr * gr / (hr + LEAF_L2);
                    if best.as_ref().is_none_or(|(bg, _)| gain > *bg) {
                        best = Some((
                            gain,
                            Stump {
                                feature: j,
                                threshold: 0.5 * (a + b),
                                left: gl / (hl + LEAF_L2),
                                right: gr / (hr + LEAF_L2),
                            },
                        ));
                    }
                }
            }
            let Some((_, stump)) = best else { break };
            for (i, fi) in f.iter_mut().enumerate() {
                *fi += lr * stump.value(d.get(i, stump.feature));
            }
            stumps.push(Stump {
                left: lr * stump.left,
                right: lr * stump.right,
                ..stump
            });
        }
        Self { base, stumps }
    }

    /// Raw additive scores (log-odds under the logistic loss).
    pub fn predict(&self, d: &Design) -> Vec<f64> {
        (0..d.n)
            .map(|i| self.base + self.stumps.iter().map(|s| s.value(d.get(i, s.feature))).sum::<f64>())
            .collect()
    }
}

impl Stump {
    fn value(&self, v: f64) -> f64 {
        if v <= self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

fn penalty(p: usize, lambda: f64) -> DMatrix<f64> {
    // the intercept (last column) is not penalized
    DMatrix::from_fn(p + 1, p + 1, |i, j| if i == j && i < p { lambda } else { 0.0 })
}

fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    a.clone()
        .cholesky()
        .map(|c| c.solve(&b))
        .or_else(|| a.lu().solve(&b))
        .ok_or_else(|| Error::Numerical("singular system in linear learner".into()))
}

/// Ridge regression or ridge-logistic weights with an unpenalized intercept.
#[derive(Clone, Debug)]
pub struct LinearModel {
    w: DVector<f64>,
}

impl LinearModel {
    pub fn fit(d: &Design, y: &[f64], loss: Loss) -> Result<Self> {
        let x = d.to_matrix_with_intercept();
        let yv = DVector::from_column_slice(y);
        let pen = penalty(d.p, RIDGE_L2);
        let w = match loss {
            Loss::Squared => solve(x.transpose() * &x + &pen, x.transpose() * yv)?,
            Loss::Logistic => {
                let mut w = DVector::zeros(d.p + 1);
                for _ in 0..NEWTON_ITERS {
                    let p = (&x * &w).map(sigmoid);
                    let s = p.map(|v| (v * (1.0 - v)).max(1e-12));
                    let xs = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * s[i]);
                    let hess = x.transpose() * xs + &pen;
                    let grad = x.transpose() * (&p - &yv) + &pen * &w;
                    let step = solve(hess, grad)?;
                    w -= &step;
                    if step.amax() < 1e-10 {
                        break;
                    }
                }
                w
            }
        };
        Ok(Self { w })
    }

    pub fn predict(&self, d: &Design) -> Vec<f64> {
        (d.to_matrix_with_intercept() * &self.w).iter().copied().collect()
    }
}

/// Fits `learner` and returns raw scores on `test`.
pub fn fit_predict(learner: Learner, train: &Design, y: &[f64], loss: Loss, test: &Design) -> Result<Vec<f64>> {
    match learner {
        Learner::BoostedStumps => Ok(BoostedStumps::fit(train, y, loss, BOOSTING_ROUNDS, BOOSTING_LR).predict(test)),
        Learner::Linear => Ok(LinearModel::fit(train, y, loss)?.predict(test)),
    }
}
