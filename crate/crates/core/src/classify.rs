use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Majority vote among the `k` nearest training rows (Euclidean).
///
/// Equal-distance candidates at the neighbor boundary are taken in training
/// order. A tied vote goes to the class with the smaller summed distance,
/// then to the smaller class index.
pub fn knn_predict(
    train: ArrayView2<f64>,
    train_labels: &[usize],
    test: ArrayView2<f64>,
    k: usize,
) -> Result<Vec<usize>> {
    let n = train.nrows();
    if n == 0 {
        return Err(Error::Data("k-NN: empty training set".into()));
    }
    if train_labels.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} training rows", train_labels.len())));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k-NN: k = {k} must lie in 1..={n}")));
    }
    if test.ncols() != train.ncols() {
        return Err(Error::Dimension(format!(
            "test rows have {} columns, training rows {}",
            test.ncols(),
            train.ncols()
        )));
    }
    let n_classes = train_labels.iter().max().map_or(0, |&c| c + 1);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut votes = vec![0usize; n_classes];
    let mut dist_sum = vec![0.0f64; n_classes];
    let mut out = Vec::with_capacity(test.nrows());
    for q in test.rows() {
        cand.clear();
        for (j, r) in train.rows().into_iter().enumerate() {
            let d: f64 = q.iter().zip(r.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            cand.push((d, j));
        }
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < n {
            cand.select_nth_unstable_by(k - 1, order);
        }
        votes.iter_mut().for_each(|v| *v = 0);
        dist_sum.iter_mut().for_each(|v| *v = 0.0);
        for &(d, j) in &cand[..k] {
            votes[train_labels[j]] += 1;
            dist_sum[train_labels[j]] += d.sqrt();
        }
        let best = (0..n_classes)
            .filter(|&c| votes[c] > 0)
            .min_by(|&a, &b| {
                votes[b]
                    .cmp(&votes[a])
                    .then(dist_sum[a].total_cmp(&dist_sum[b]))
                    .then(a.cmp(&b))
            })
            .expect("k >= 1");
        out.push(best);
    }
    Ok(out)
}

/// Rows are true classes, columns predicted classes. Counts are reals so
/// that fold averages stay in the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Array2<f64>,
    pub class_names: Vec<String>,
}

pub fn confusion(truth: &[usize], predicted: &[usize], class_names: &[String]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Dimension(format!("{} true labels vs {} predictions", truth.len(), predicted.len())));
    }
    let c = class_names.len();
    let mut counts = Array2::zeros((c, c));
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= c || p >= c {
            return Err(Error::InvalidParameter(format!("label pair ({t}, {p}) outside {c} classes")));
        }
        counts[[t, p]] += 1.0;
    }
    Ok(ConfusionMatrix { counts, class_names: class_names.to_vec() })
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn total(&self) -> f64 {
        self.counts.sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.counts.rows().into_iter().map(|r| r.sum()).collect()
    }

    /// Elementwise mean of several matrices over the same classes.
    pub fn mean_of(mats: &[ConfusionMatrix]) -> Result<ConfusionMatrix> {
        let first = mats.first().ok_or_else(|| Error::Data("no confusion matrices to average".into()))?;
        let mut counts = Array2::zeros(first.counts.dim());
        for m in mats {
            if m.class_names != first.class_names {
                return Err(Error::Dimension("confusion matrices over different classes".into()));
            }
            counts += &m.counts;
        }
        counts /= mats.len() as f64;
        Ok(ConfusionMatrix { counts, class_names: first.class_names.clone() })
    }

    /// Header row and first column carry the class names.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for name in &self.class_names {
            let _ = write!(s, ",{name}");
        }
        s.push('\n');
        for (i, name) in self.class_names.iter().enumerate() {
            s.push_str(name);
            for j in 0..self.n_classes() {
                let _ = write!(s, ",{}", self.counts[[i, j]]);
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    fn one_vs_rest(&self, c: usize) -> (f64, f64, f64, f64) {
        let tp = self.counts[[c, c]];
        let fn_ = self.counts.row(c).sum() - tp;
        let fp = self.counts.column(c).sum() - tp;
        let tn = self.total() - tp - fn_ - fp;
        (tp, tn, fp, fn_)
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total <= 0.0 {
        return Err(Error::Data("accuracy of an empty confusion matrix".into()));
    }
    Ok(cm.counts.diag().sum() / total)
}

/// `TP / (TP + FN)` for `class`; `None` when the class has no true samples.
pub fn sensitivity(cm: &ConfusionMatrix, class: usize) -> Option<f64> {
    let (tp, _, _, fn_) = cm.one_vs_rest(class);
    (tp + fn_ > 0.0).then(|| tp / (tp + fn_))
}

/// `TN / (TN + FP)` for `class`; `None` when every sample belongs to it.
pub fn specificity(cm: &ConfusionMatrix, class: usize) -> Option<f64> {
    let (_, tn, fp, _) = cm.one_vs_rest(class);
    (tn + fp > 0.0).then(|| tn / (tn + fp))
}

fn macro_mean(cm: &ConfusionMatrix, what: &str, f: fn(&ConfusionMatrix, usize) -> Option<f64>) -> Option<f64> {
    let vals: Vec<f64> = (0..cm.n_classes())
        .filter_map(|c| {
            let v = f(cm, c);
            if v.is_none() {
                log::warn!("{what} undefined for class '{}'; excluded from macro mean", cm.class_names[c]);
            }
            v
        })
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

pub fn macro_sensitivity(cm: &ConfusionMatrix) -> Option<f64> {
    macro_mean(cm, "sensitivity", sensitivity)
}

pub fn macro_specificity(cm: &ConfusionMatrix) -> Option<f64> {
    macro_mean(cm, "specificity", specificity)
}
