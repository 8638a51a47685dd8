use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::encdec::{ColumnData, ColumnSpec, Table, TableSchema};
use crate::error::{Error, Result};
use crate::seeds;

pub const MIN_ROWS: usize = 50;
pub const MAX_ROWS: usize = 2000;
pub const MIN_FEATURES: usize = 2;
pub const MAX_FEATURES: usize = 50;

/// Generating family and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Isotropic Gaussian clusters; the target is the cluster label.
    GaussianMixture {
        components: usize,
        /// Std of the cluster means around the origin.
        spread: f64,
        noise_scale: f64,
    },
    /// `y = w·x + noise` with standard-normal inputs.
    LinearRegression { noise_scale: f64 },
    /// Latent-class model over categorical features; the target is a
    /// numeric value shifted per class.
    CategoricalMixture {
        components: usize,
        categories: usize,
        /// Dirichlet concentration for per-class category probabilities.
        concentration: f64,
        /// Same category probabilities for every class and feature.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fixed_probabilities: Option<Vec<f64>>,
        noise_scale: f64,
    },
    /// Two interleaved half circles plus standard-normal distractor columns.
    TwoMoonsLike { noise_scale: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::GaussianMixture { .. } => "gaussian_mixture",
            Family::LinearRegression { .. } => "linear_regression",
            Family::CategoricalMixture { .. } => "categorical_mixture",
            Family::TwoMoonsLike { .. } => "two_moons_like",
        }
    }
}

/// One procedurally generated dataset. `n_features` counts every column,
/// the target included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    #[serde(flatten)]
    pub family: Family,
    pub n_rows: usize,
    pub n_features: usize,
    pub seed: u64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.task_id.is_empty() || !self.task_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(Error::Config(format!("task id {:?} must be non-empty [A-Za-z0-9_-]", self.task_id)));
        }
        if !(MIN_ROWS..=MAX_ROWS).contains(&self.n_rows) {
            return Err(Error::Config(format!("n_rows {} outside [{MIN_ROWS}, {MAX_ROWS}]", self.n_rows)));
        }
        if !(MIN_FEATURES..=MAX_FEATURES).contains(&self.n_features) {
            return Err(Error::Config(format!(
                "n_features {} outside [{MIN_FEATURES}, {MAX_FEATURES}]",
                self.n_features
            )));
        }
        match &self.family {
            Family::GaussianMixture { components, spread, noise_scale } => {
                if *components == 0 {
                    return Err(Error::Config("gaussian_mixture needs at least one component".into()));
                }
                if !(spread.is_finite() && *spread >= 0.0) {
                    return Err(Error::Config(format!("spread must be finite and non-negative, got {spread}")));
                }
                positive("noise_scale", *noise_scale)
            }
            Family::LinearRegression { noise_scale } => positive("noise_scale", *noise_scale),
            Family::CategoricalMixture {
                components,
                categories,
                concentration,
                fixed_probabilities,
                noise_scale,
            } => {
                if *components == 0 {
                    return Err(Error::Config("categorical_mixture needs at least one component".into()));
                }
                if *categories < 2 {
                    return Err(Error::Config("categorical_mixture needs at least 2 categories".into()));
                }
                if let Some(p) = fixed_probabilities {
                    let total: f64 = p.iter().sum();
                    if p.len() != *categories || p.iter().any(|x| !(*x >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                        return Err(Error::Config(format!(
                            "fixed_probabilities must be {categories} non-negative values summing to 1"
                        )));
                    }
                }
                positive("concentration", *concentration)?;
                positive("noise_scale", *noise_scale)
            }
            Family::TwoMoonsLike { noise_scale } => {
                if self.n_features < 3 {
                    return Err(Error::Config("two_moons_like needs at least 3 columns (x0, x1, target)".into()));
                }
                positive("noise_scale", *noise_scale)
            }
        }
    }
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn dirichlet(rng: &mut ChaCha8Rng, k: usize, alpha: f64) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("validated concentration");
    let mut g: Vec<f64> = (0..k).map(|_| gamma.sample(rng).max(f64::MIN_POSITIVE)).collect();
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|x| *x /= total);
    g
}

fn draw_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Fixed parameters of a task's generating distribution, from which fresh
/// i.i.d. rows can be drawn at any time.
#[derive(Clone, Debug)]
pub enum GroundTruth {
    GaussianMixture {
        means: Vec<Vec<f64>>,
        noise_scale: f64,
    },
    LinearRegression {
        weights: Vec<f64>,
        noise_scale: f64,
    },
    CategoricalMixture {
        /// `probabilities[class][feature]` over categories.
        probabilities: Vec<Vec<Vec<f64>>>,
        class_shift: Vec<f64>,
        noise_scale: f64,
    },
    TwoMoonsLike {
        distractors: usize,
        noise_scale: f64,
    },
}

impl GroundTruth {
    pub fn from_spec(spec: &TaskSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(spec.seed, &[0]));
        let f = spec.n_features - 1;
        Ok(match &spec.family {
            Family::GaussianMixture { components, spread, noise_scale } => GroundTruth::GaussianMixture {
                means: (0..*components).map(|_| (0..f).map(|_| spread * normal(&mut rng)).collect()).collect(),
                noise_scale: *noise_scale,
            },
            Family::LinearRegression { noise_scale } => GroundTruth::LinearRegression {
                weights: (0..f).map(|_| normal(&mut rng)).collect(),
                noise_scale: *noise_scale,
            },
            Family::CategoricalMixture {
                components,
                categories,
                concentration,
                fixed_probabilities,
                noise_scale,
            } => GroundTruth::CategoricalMixture {
                probabilities: (0..*components)
                    .map(|_| {
                        (0..f)
                            .map(|_| match fixed_probabilities {
                                Some(p) => p.clone(),
                                None => dirichlet(&mut rng, *categories, *concentration),
                            })
                            .collect()
                    })
                    .collect(),
                class_shift: (0..*components).map(|_| 2.0 * normal(&mut rng)).collect(),
                noise_scale: *noise_scale,
            },
            Family::TwoMoonsLike { noise_scale } => GroundTruth::TwoMoonsLike {
                distractors: spec.n_features - 3,
                noise_scale: *noise_scale,
            },
        })
    }

    pub fn schema(&self) -> TableSchema {
        let cols: Vec<ColumnSpec> = match self {
            GroundTruth::GaussianMixture { means, .. } => {
                let cats = names("c", means.len().max(2));
                let cats: Vec<&str> = cats.iter().map(String::as_str).collect();
                let mut c: Vec<ColumnSpec> = names("x", means[0].len()).into_iter().map(ColumnSpec::numeric).collect();
                c.push(ColumnSpec::categorical("y", &cats).as_target());
                c
            }
            GroundTruth::LinearRegression { weights, .. } => {
                let mut c: Vec<ColumnSpec> = names("x", weights.len()).into_iter().map(ColumnSpec::numeric).collect();
                c.push(ColumnSpec::numeric("y").as_target());
                c
            }
            GroundTruth::CategoricalMixture { probabilities, .. } => {
                let k = probabilities[0].first().map_or(2, Vec::len);
                let cats = names("k", k);
                let cats: Vec<&str> = cats.iter().map(String::as_str).collect();
                let mut c: Vec<ColumnSpec> = names("x", probabilities[0].len())
                    .into_iter()
                    .map(|n| ColumnSpec::categorical(n, &cats))
                    .collect();
                c.push(ColumnSpec::numeric("y").as_target());
                c
            }
            GroundTruth::TwoMoonsLike { distractors, .. } => {
                let mut c: Vec<ColumnSpec> = names("x", 2 + distractors).into_iter().map(ColumnSpec::numeric).collect();
                c.push(ColumnSpec::categorical("y", &["c0", "c1"]).as_target());
                c
            }
        };
        TableSchema::new(cols).expect("generated schema is valid")
    }

    /// Draws `n` i.i.d. rows.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Table {
        let schema = self.schema();
        let width = schema.len();
        let mut num: Vec<Vec<f64>> = vec![Vec::with_capacity(n); width];
        let mut cat: Vec<Vec<usize>> = vec![Vec::with_capacity(n); width];
        for _ in 0..n {
            match self {
                GroundTruth::GaussianMixture { means, noise_scale } => {
                    let c = rng.random_range(0..means.len());
                    for (j, m) in means[c].iter().enumerate() {
                        num[j].push(m + noise_scale * normal(rng));
                    }
                    cat[width - 1].push(c);
                }
                GroundTruth::LinearRegression { weights, noise_scale } => {
                    let mut y = 0.0;
                    for (j, w) in weights.iter().enumerate() {
                        let x = normal(rng);
                        y += w * x;
                        num[j].push(x);
                    }
                    num[width - 1].push(y + noise_scale * normal(rng));
                }
                GroundTruth::CategoricalMixture {
                    probabilities,
                    class_shift,
                    noise_scale,
                } => {
                    let c = rng.random_range(0..probabilities.len());
                    for (j, p) in probabilities[c].iter().enumerate() {
                        cat[j].push(draw_index(rng, p));
                    }
                    num[width - 1].push(class_shift[c] + noise_scale * normal(rng));
                }
                GroundTruth::TwoMoonsLike { distractors, noise_scale } => {
                    let label = rng.random_range(0..2usize);
                    let t = rng.random::<f64>() * std::f64::consts::PI;
                    let (x, y) = if label == 0 {
                        (t.cos(), t.sin())
                    } else {
                        (1.0 - t.cos(), 0.5 - t.sin())
                    };
                    num[0].push(x + noise_scale * normal(rng));
                    num[1].push(y + noise_scale * normal(rng));
                    for col in num.iter_mut().skip(2).take(*distractors) {
                        col.push(normal(rng));
                    }
                    cat[width - 1].push(label);
                }
            }
        }
        let columns = schema
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| match c.kind {
                crate::encdec::ColumnKind::Numeric => ColumnData::Numeric(std::mem::take(&mut num[j])),
                crate::encdec::ColumnKind::Categorical => ColumnData::Categorical(std::mem::take(&mut cat[j])),
            })
            .collect();
        Table::new(schema, columns).expect("generated columns match schema")
    }
}

/// Materializes the task's table; a pure function of the spec.
pub fn generate_dataset(spec: &TaskSpec) -> Result<Table> {
    let truth = GroundTruth::from_spec(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(spec.seed, &[1]));
    Ok(truth.sample(spec.n_rows, &mut rng))
}

/// Ranges for drawing a random corpus of tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusPlan {
    pub n_tasks: usize,
    pub rows: (usize, usize),
    pub features: (usize, usize),
    pub seed: u64,
}

impl CorpusPlan {
    pub fn validate(&self) -> Result<()> {
        let (r0, r1) = self.rows;
        let (f0, f1) = self.features;
        if r0 > r1 || r0 < MIN_ROWS || r1 > MAX_ROWS {
            return Err(Error::Config(format!("row range {:?} must lie in [{MIN_ROWS}, {MAX_ROWS}]", self.rows)));
        }
        if f0 > f1 || f0 < MIN_FEATURES || f1 > MAX_FEATURES {
            return Err(Error::Config(format!(
                "feature range {:?} must lie in [{MIN_FEATURES}, {MAX_FEATURES}]",
                self.features
            )));
        }
        Ok(())
    }
}

/// Draws `n_tasks` specs with families chosen uniformly at random.
pub fn random_tasks(plan: &CorpusPlan) -> Result<Vec<TaskSpec>> {
    plan.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut out = Vec::with_capacity(plan.n_tasks);
    for t in 0..plan.n_tasks {
        let n_rows = rng.random_range(plan.rows.0..=plan.rows.1);
        let mut n_features = rng.random_range(plan.features.0..=plan.features.1);
        let noise_scale = rng.random_range(0.1..1.0);
        let family = match rng.random_range(0..4) {
            0 => Family::GaussianMixture {
                components: rng.random_range(2..=4),
                spread: rng.random_range(1.0..3.0),
                noise_scale,
            },
            1 => Family::LinearRegression { noise_scale },
            2 => Family::CategoricalMixture {
                components: rng.random_range(2..=4),
                categories: rng.random_range(2..=5),
                concentration: 1.0,
                fixed_probabilities: None,
                noise_scale,
            },
            _ => {
                n_features = n_features.max(3);
                Family::TwoMoonsLike { noise_scale: noise_scale * 0.3 }
            }
        };
        out.push(TaskSpec {
            task_id: format!("task{t:04}"),
            family,
            n_rows,
            n_features,
            seed: seeds::derive(plan.seed, &[t as u64]),
        });
    }
    Ok(out)
}
