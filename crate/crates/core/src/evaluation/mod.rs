//! Cross-validation, confusion matrices, accuracy sweeps and regression error.

mod regression;
mod sweep;
pub mod tasks;

pub use regression::{evaluate_regression, evaluate_regression_groups, regression_pairs, GroupError, RegressionGroup, RegressionReport, RegressionTarget};
pub use sweep::{evaluate_lookup, sweep, ClassifierSpec, LookupReport, SweepConfig, SweepResult};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::ClassifierError;
use crate::features::FeatureError;
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("class {class} has {found} items, fewer than k = {k}")]
    TooFewPerClass { class: String, found: usize, k: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no n values to sweep")]
    NoNValues,
    #[error("n and instances_per_n must be at least 1")]
    ZeroInstances,
    #[error("task has no data")]
    EmptyTask,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// Indices of one cross-validation split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold split of `items`, each `(class, content)`.
///
/// Within a class, items are first sorted by content and then shuffled with a
/// stream derived from `seed` and the class rank, so the split depends on the
/// multiset of items and not on their order. The shuffled items are dealt to
/// folds round-robin.
pub fn kfold<C, T>(items: &[(C, T)], k: usize, seed: u64) -> Result<Vec<Fold>, EvalError>
where
    C: Ord + std::fmt::Debug,
    T: Ord,
{
    if k < 2 {
        return Err(EvalError::InvalidK(k));
    }
    let mut by_class: BTreeMap<&C, Vec<usize>> = BTreeMap::new();
    for (i, (c, _)) in items.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut fold_of = vec![0usize; items.len()];
    for (rank, (class, idx)) in by_class.iter_mut().enumerate() {
        if idx.len() < k {
            return Err(EvalError::TooFewPerClass {
                class: format!("{class:?}"),
                found: idx.len(),
                k,
            });
        }
        idx.sort_by(|&a, &b| items[a].1.cmp(&items[b].1));
        idx.shuffle(&mut rng::stream(seed, &[0x6b66_6f6c_64, rank as u64]));
        for (pos, &i) in idx.iter().enumerate() {
            fold_of[i] = pos % k;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..items.len()).partition(|&i| fold_of[i] == f);
            Fold { train, test }
        })
        .collect())
}

/// `counts[truth][predicted]` over a fixed class list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix<C> {
    pub classes: Vec<C>,
    pub counts: Vec<Vec<u64>>,
}

impl<C: PartialEq + Clone> ConfusionMatrix<C> {
    pub fn new(classes: Vec<C>) -> Self {
        let n = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; n]; n],
        }
    }

    fn index(&self, c: &C) -> usize {
        self.classes
            .iter()
            .position(|x| x == c)
            .expect("class belongs to the matrix")
    }

    pub fn record(&mut self, truth: &C, predicted: &C) {
        let (t, p) = (self.index(truth), self.index(predicted));
        self.counts[t][p] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix<C>) {
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in row.iter_mut().zip(orow) {
                *x += y;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_total(&self, class: &C) -> u64 {
        self.counts[self.index(class)].iter().sum()
    }

    /// Fraction of `truth` instances predicted as `predicted`.
    pub fn rate(&self, truth: &C, predicted: &C) -> f64 {
        let row = &self.counts[self.index(truth)];
        let total: u64 = row.iter().sum();
        if total == 0 {
            0.0
        } else {
            row[self.index(predicted)] as f64 / total as f64
        }
    }

    pub fn recall(&self, class: &C) -> f64 {
        self.rate(class, class)
    }

    pub fn accuracy(&self) -> Result<f64, EvalError> {
        accuracy(self)
    }
}

impl<C: std::fmt::Display> ConfusionMatrix<C> {
    /// Row-normalized rates as an aligned text table.
    pub fn render(&self) -> String {
        let names: Vec<String> = self.classes.iter().map(|c| c.to_string()).collect();
        let width = names.iter().map(|n| n.len()).max().unwrap_or(0).max(5);
        let mut out = format!("{:>width$}", "");
        for n in &names {
            let _ = write!(out, " {n:>width$}");
        }
        out.push('\n');
        for (name, row) in names.iter().zip(&self.counts) {
            let total: u64 = row.iter().sum();
            let _ = write!(out, "{name:>width$}");
            for &x in row {
                let rate = if total == 0 { 0.0 } else { x as f64 / total as f64 };
                let _ = write!(out, " {rate:>width$.2}");
            }
            out.push('\n');
        }
        out
    }
}

/// Diagonal mass over total mass.
pub fn accuracy<C>(cm: &ConfusionMatrix<C>) -> Result<f64, EvalError> {
    let total: u64 = cm.counts.iter().flatten().sum();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let correct: u64 = (0..cm.counts.len()).map(|i| cm.counts[i][i]).sum();
    Ok(correct as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub accuracy: f64,
    pub count: u64,
}

/// Accuracy as a function of the number of observed packets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub points: Vec<CurvePoint>,
}

impl AccuracyCurve {
    pub fn at(&self, n: usize) -> Option<f64> {
        self.points.iter().find(|p| p.n == n).map(|p| p.accuracy)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,accuracy,count\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.n, p.accuracy, p.count);
        }
        out
    }
}
