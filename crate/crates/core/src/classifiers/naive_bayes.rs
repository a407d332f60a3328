use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::features::{FeatureKind, FeatureVector, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NbKind {
    /// Bernoulli features over binary presence vectors.
    Binomial,
    /// Event model over count vectors.
    Multinomial,
}

impl NbKind {
    pub fn feature_kind(self) -> FeatureKind {
        match self {
            NbKind::Binomial => FeatureKind::Binary,
            NbKind::Multinomial => FeatureKind::Counts,
        }
    }
}

/// A trained naive Bayes classifier over classes `C`.
///
/// Classes are kept sorted; that order breaks ties in [`NaiveBayesModel::predict`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel<C> {
    pub kind: NbKind,
    pub classes: Vec<C>,
    pub log_prior: Vec<f64>,
    /// Binomial: `log p`; multinomial: `log theta`. One row per class.
    pub log_prob: Vec<Vec<f64>>,
    /// Binomial only: `log (1 - p)`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub log_not_prob: Vec<Vec<f64>>,
    pub smoothing_alpha: f64,
    pub vocabulary: Vocabulary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<C> {
    pub class: C,
    /// Normalized: `exp` of these sums to 1.
    pub log_posterior: Vec<f64>,
}

/// Fits a model by maximum likelihood with additive smoothing `alpha`.
///
/// `classes` lists every class the model must know; each needs at least one
/// instance. Priors are proportional to instance counts.
pub fn train_nb<C: Ord + Clone>(
    instances: &[(FeatureVector, C)],
    classes: &[C],
    vocabulary: &Vocabulary,
    kind: NbKind,
    alpha: f64,
) -> Result<NaiveBayesModel<C>, ClassifierError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(ClassifierError::InvalidAlpha(alpha));
    }
    let mut sorted: Vec<C> = classes.to_vec();
    sorted.sort();
    sorted.dedup();
    let dims = vocabulary.len();
    let want = kind.feature_kind();
    let mut totals = vec![vec![0u64; dims]; sorted.len()];
    let mut counts = vec![0u64; sorted.len()];
    for (v, c) in instances {
        if v.kind != want {
            return Err(ClassifierError::MixedVectorKinds);
        }
        if v.values.len() != dims {
            return Err(ClassifierError::VocabularyMismatch {
                expected: dims,
                found: v.values.len(),
            });
        }
        let ci = sorted.binary_search(c).map_err(|_| ClassifierError::UnknownClass)?;
        counts[ci] += 1;
        for (t, &x) in totals[ci].iter_mut().zip(&v.values) {
            *t += u64::from(x);
        }
    }
    if let Some(missing) = counts.iter().position(|&n| n == 0) {
        return Err(ClassifierError::ClassWithNoInstances(missing));
    }
    let n_total: u64 = counts.iter().sum();
    let log_prior = counts
        .iter()
        .map(|&n| (n as f64 / n_total as f64).ln())
        .collect();
    let mut log_prob = Vec::with_capacity(sorted.len());
    let mut log_not_prob = Vec::new();
    for (row, &n) in totals.iter().zip(&counts) {
        match kind {
            NbKind::Binomial => {
                let denom = n as f64 + 2.0 * alpha;
                let p: Vec<f64> = row.iter().map(|&on| (on as f64 + alpha) / denom).collect();
                log_prob.push(p.iter().map(|x| x.ln()).collect());
                log_not_prob.push(p.iter().map(|x| (-x).ln_1p()).collect());
            }
            NbKind::Multinomial => {
                let events: u64 = row.iter().sum();
                let denom = events as f64 + alpha * dims as f64;
                log_prob.push(row.iter().map(|&c| ((c as f64 + alpha) / denom).ln()).collect());
            }
        }
    }
    Ok(NaiveBayesModel {
        kind,
        classes: sorted,
        log_prior,
        log_prob,
        log_not_prob,
        smoothing_alpha: alpha,
        vocabulary: vocabulary.clone(),
    })
}

impl<C: Clone> NaiveBayesModel<C> {
    /// Unnormalized log joint `log P(c) + log P(x | c)` per class. The
    /// multinomial coefficient is omitted since it is shared by all classes.
    pub fn joint_log_likelihood(&self, vector: &FeatureVector) -> Result<Vec<f64>, ClassifierError> {
        if vector.kind != self.kind.feature_kind() {
            return Err(ClassifierError::MixedVectorKinds);
        }
        if vector.values.len() != self.vocabulary.len() {
            return Err(ClassifierError::VocabularyMismatch {
                expected: self.vocabulary.len(),
                found: vector.values.len(),
            });
        }
        let scores = (0..self.classes.len())
            .map(|ci| {
                let lp = &self.log_prob[ci];
                let body: f64 = match self.kind {
                    NbKind::Multinomial => vector
                        .values
                        .iter()
                        .zip(lp)
                        .filter(|(&x, _)| x > 0)
                        .map(|(&x, &l)| f64::from(x) * l)
                        .sum(),
                    NbKind::Binomial => {
                        let lq = &self.log_not_prob[ci];
                        vector
                            .values
                            .iter()
                            .enumerate()
                            .map(|(f, &x)| if x > 0 { lp[f] } else { lq[f] })
                            .sum()
                    }
                };
                self.log_prior[ci] + body
            })
            .collect();
        Ok(scores)
    }

    /// Most probable class. Exact score ties go to the earliest class.
    pub fn predict(&self, vector: &FeatureVector) -> Result<Prediction<C>, ClassifierError> {
        let scores = self.joint_log_likelihood(vector)?;
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        let max = scores[best];
        let log_norm = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        Ok(Prediction {
            class: self.classes[best].clone(),
            log_posterior: scores.iter().map(|s| s - log_norm).collect(),
        })
    }
}

/// Shorthand for [`NaiveBayesModel::predict`].
pub fn predict_nb<C: Clone>(model: &NaiveBayesModel<C>, vector: &FeatureVector) -> Result<Prediction<C>, ClassifierError> {
    model.predict(vector)
}
