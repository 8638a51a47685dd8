use serde::{Deserialize, Serialize};

use super::learners::{fit_predict, FeatureMap, Learner, Loss};
use crate::encdec::{ColumnData, Table};
use crate::error::{Error, Result};

/// Area under the ROC curve from the rank-sum statistic (ties get average
/// ranks). `None` unless both classes are present.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|&&k| positive[k]).count() as f64 * avg;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// `1 − SS_res/SS_tot`; `None` for a constant truth.
pub fn r_squared(pred: &[f64], truth: &[f64]) -> Option<f64> {
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return None;
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Some(1.0 - ss_res / ss_tot)
}

/// Trains `learner` on `train_like` and scores it on `test`: macro
/// one-vs-rest AUC for a categorical target, R² for a numeric one.
pub fn utility(train_like: &Table, test: &Table, learner: Learner) -> Result<f64> {
    train_like.ensure_same_schema(test)?;
    if test.n_rows() == 0 || train_like.n_rows() == 0 {
        return Err(Error::Data("utility needs non-empty training and test tables".into()));
    }
    let target = test.schema().target_index();
    let map = FeatureMap::fit(train_like);
    let (dtr, dte) = (map.transform(train_like), map.transform(test));
    match (train_like.column(target), test.column(target)) {
        (ColumnData::Numeric(y), ColumnData::Numeric(t)) => {
            let pred = fit_predict(learner, &dtr, y, Loss::Squared, &dte)?;
            r_squared(&pred, t).ok_or_else(|| Error::Data("test target is constant; R² undefined".into()))
        }
        (ColumnData::Categorical(y), ColumnData::Categorical(t)) => {
            let k = test.schema().columns[target].categories.len();
            let present: Vec<usize> = (0..k).filter(|c| y.contains(c)).collect();
            if present.len() < 2 {
                return Err(Error::Data("classification training set has a single class".into()));
            }
            let mut aucs = Vec::new();
            // binary targets need one model; its scores rank class 1 against class 0
            let classes: Vec<usize> = if k == 2 { vec![1] } else { (0..k).collect() };
            for c in classes {
                let labels: Vec<f64> = y.iter().map(|&v| f64::from(u8::from(v == c))).collect();
                let positive: Vec<bool> = t.iter().map(|&v| v == c).collect();
                if !present.contains(&c) {
                    // never seen in training: every score ties, AUC 0.5 when defined
                    if positive.iter().any(|&p| p) && positive.iter().any(|&p| !p) {
                        aucs.push(0.5);
                    }
                    continue;
                }
                let scores = fit_predict(learner, &dtr, &labels, Loss::Logistic, &dte)?;
                if let Some(a) = auc(&scores, &positive) {
                    aucs.push(a);
                }
            }
            if aucs.is_empty() {
                return Err(Error::Data("test set has a single class; AUC undefined".into()));
            }
            Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
        }
        _ => unreachable!("schemas match"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub augmented: f64,
    pub baseline: f64,
}

impl Augmentation {
    pub fn delta(&self) -> f64 {
        self.augmented - self.baseline
    }
}

/// Utility of real training rows plus synthetic rows, next to the real-only
/// baseline.
pub fn augmentation_eval(real_train: &Table, syn: &Table, test: &Table, learner: Learner) -> Result<Augmentation> {
    real_train.ensure_same_schema(syn)?;
    let baseline = utility(real_train, test, learner)?;
    let augmented = if syn.n_rows() == 0 {
        baseline
    } else {
        utility(&real_train.concat(syn)?, test, learner)?
    };
    Ok(Augmentation { augmented, baseline })
}
