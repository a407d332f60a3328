use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{kfold, EvalError};
use crate::classifiers::{fit_linear, LinearModel};
use crate::trace::{Action, Dataset, Direction, Language, Os, Service};

/// What the regression predicts from the content packet length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionTarget {
    /// Message length in characters, from text traces.
    PlaintextChars,
    /// Attachment size in bytes, from image traces.
    AttachmentBytes,
}

/// One independently fitted regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegressionGroup {
    pub target: RegressionTarget,
    pub service: Service,
    pub os: Os,
    pub direction: Direction,
    pub language: Language,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub group: RegressionGroup,
    /// Cross-validated mean absolute error.
    pub mae: f64,
    /// Same, for a predictor that always answers the training mean.
    pub baseline_mae: f64,
    pub count: usize,
    /// Fit on the whole group, for reference.
    pub model: LinearModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub groups: Vec<GroupError>,
    /// Mean of the group errors.
    pub overall_mae: f64,
    pub overall_baseline_mae: f64,
}

impl RegressionReport {
    /// Mean group error per language (across OS and direction).
    pub fn by_language(&self) -> BTreeMap<Language, f64> {
        mean_by(&self.groups, |g| g.group.language)
    }

    /// Mean group error per (language, OS), across directions.
    pub fn by_language_os(&self) -> BTreeMap<(Language, Os), f64> {
        mean_by(&self.groups, |g| (g.group.language, g.group.os))
    }
}

fn mean_by<K: Ord>(groups: &[GroupError], key: impl Fn(&GroupError) -> K) -> BTreeMap<K, f64> {
    let mut acc: BTreeMap<K, (f64, usize)> = BTreeMap::new();
    for g in groups {
        let e = acc.entry(key(g)).or_default();
        e.0 += g.mae;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Per-group `(mae, baseline_mae, count, full fit)` under k-fold CV.
pub fn evaluate_regression_groups<G: Clone + Ord>(
    groups: &BTreeMap<G, Vec<(u32, u64)>>,
    k: usize,
    seed: u64,
) -> Result<Vec<(G, f64, f64, usize, LinearModel)>, EvalError> {
    let mut out = Vec::new();
    for (gi, (group, pairs)) in groups.iter().enumerate() {
        let items: Vec<((), (u32, u64))> = pairs.iter().map(|&p| ((), p)).collect();
        let folds = kfold(&items, k, crate::rng::derive_seed(seed, &[gi as u64]))?;
        let (mut err, mut base) = (0.0, 0.0);
        for fold in &folds {
            let train: Vec<(f64, f64)> = fold
                .train
                .iter()
                .map(|&i| (f64::from(pairs[i].0), pairs[i].1 as f64))
                .collect();
            let model = fit_linear(&train)?;
            let mean = train.iter().map(|p| p.1).sum::<f64>() / train.len() as f64;
            for &i in &fold.test {
                let (x, y) = (f64::from(pairs[i].0), pairs[i].1 as f64);
                err += (model.predict(x) - y).abs();
                base += (mean - y).abs();
            }
        }
        let all: Vec<(f64, f64)> = pairs.iter().map(|&(x, y)| (f64::from(x), y as f64)).collect();
        let n = pairs.len() as f64;
        out.push((group.clone(), err / n, base / n, pairs.len(), fit_linear(&all)?));
    }
    Ok(out)
}

/// `(content length, target)` pairs grouped by (target, service, os,
/// direction, language). The content packet is the largest packet of the
/// trace in each direction.
pub fn regression_pairs(dataset: &Dataset, target: RegressionTarget) -> BTreeMap<RegressionGroup, Vec<(u32, u64)>> {
    let mut groups: BTreeMap<RegressionGroup, Vec<(u32, u64)>> = BTreeMap::new();
    for trace in &dataset.traces {
        let l = &trace.label;
        let value = match (target, l.action) {
            (RegressionTarget::PlaintextChars, Action::Text) => l.plaintext_chars.map(u64::from),
            (RegressionTarget::AttachmentBytes, Action::Image) => l.attachment_bytes,
            _ => None,
        };
        let Some(value) = value else { continue };
        for direction in Direction::ALL {
            let content = trace
                .packets
                .iter()
                .filter(|p| p.direction == direction)
                .map(|p| p.payload_length)
                .max();
            if let Some(len) = content {
                let group = RegressionGroup {
                    target,
                    service: l.service,
                    os: l.os,
                    direction,
                    language: l.language,
                };
                groups.entry(group).or_default().push((len, value));
            }
        }
    }
    groups
}

/// k-fold mean absolute error of per-group least-squares fits.
pub fn evaluate_regression(dataset: &Dataset, target: RegressionTarget, k: usize, seed: u64) -> Result<RegressionReport, EvalError> {
    let groups = regression_pairs(dataset, target);
    if groups.is_empty() {
        return Err(EvalError::EmptyTask);
    }
    let rows = evaluate_regression_groups(&groups, k, seed)?;
    let groups: Vec<GroupError> = rows
        .into_iter()
        .map(|(group, mae, baseline_mae, count, model)| GroupError {
            group,
            mae,
            baseline_mae,
            count,
            model,
        })
        .collect();
    let m = groups.len() as f64;
    Ok(RegressionReport {
        overall_mae: groups.iter().map(|g| g.mae).sum::<f64>() / m,
        overall_baseline_mae: groups.iter().map(|g| g.baseline_mae).sum::<f64>() / m,
        groups,
    })
}
