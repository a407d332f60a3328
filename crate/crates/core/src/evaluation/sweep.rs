use std::collections::BTreeSet;
use std::fmt::Debug;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{kfold, AccuracyCurve, ConfusionMatrix, CurvePoint, EvalError, Fold};
use crate::classifiers::{build_lookup_from_pairs, train_nb, ControlLengths, Fallback, NbKind};
use crate::features::{extract, sample_instance, FeatureKey, Vocabulary};
use crate::rng;
use crate::trace::Action;

/// Which naive Bayes variant a sweep trains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: NbKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    1.0
}

impl ClassifierSpec {
    pub fn binomial() -> Self {
        ClassifierSpec {
            kind: NbKind::Binomial,
            alpha: 1.0,
        }
    }

    pub fn multinomial() -> Self {
        ClassifierSpec {
            kind: NbKind::Multinomial,
            alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_n_values")]
    pub n_values: Vec<usize>,
    #[serde(default = "default_instances")]
    pub instances_per_n: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> usize {
    10
}

fn default_n_values() -> Vec<usize> {
    (1..=50).collect()
}

fn default_instances() -> usize {
    1024
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            k: default_k(),
            n_values: default_n_values(),
            instances_per_n: default_instances(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult<C> {
    pub curve: AccuracyCurve,
    /// One matrix per curve point, in the same order.
    pub confusions: Vec<ConfusionMatrix<C>>,
}

impl<C: PartialEq> SweepResult<C> {
    pub fn confusion_at(&self, n: usize) -> Option<&ConfusionMatrix<C>> {
        let i = self.curve.points.iter().position(|p| p.n == n)?;
        self.confusions.get(i)
    }
}

/// Splits `total` into `parts` near-equal shares, larger shares first.
fn shares(total: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|i| total / parts + usize::from(i < total % parts))
        .collect()
}

struct FoldPools {
    train: Vec<Vec<FeatureKey>>,
    test: Vec<Vec<FeatureKey>>,
    vocabulary: Vocabulary,
}

fn pools<C: Ord>(items: &[(C, Vec<FeatureKey>)], classes: &[C], fold: &Fold) -> FoldPools {
    let gather = |idx: &[usize]| {
        let mut out = vec![Vec::new(); classes.len()];
        for &i in idx {
            let ci = classes.binary_search(&items[i].0).expect("class list covers items");
            out[ci].extend_from_slice(&items[i].1);
        }
        // pool order must not depend on item order
        out.iter_mut().for_each(|pool| pool.sort_unstable());
        out
    };
    let train = gather(&fold.train);
    let test = gather(&fold.test);
    let vocabulary = Vocabulary::from_keys(train.iter().flatten().copied());
    FoldPools { train, test, vocabulary }
}

/// Accuracy of a naive Bayes classifier on `n`-packet instances, for every
/// `n` in `config.n_values`, under stratified k-fold cross-validation.
///
/// Each item is one trace: its class and the packets it contributes. Per
/// fold, instances are drawn from the pooled packets of the training or the
/// test traces of a class, so nothing leaks across the split. The
/// `instances_per_n` instances are spread evenly over classes and then over
/// folds; every instance is tested once and the other folds' shares are used
/// for training. Each `(n, fold)` unit draws from its own stream.
pub fn sweep<C>(items: &[(C, Vec<FeatureKey>)], spec: ClassifierSpec, config: &SweepConfig) -> Result<SweepResult<C>, EvalError>
where
    C: Ord + Clone + Debug + Send + Sync,
{
    if config.n_values.is_empty() {
        return Err(EvalError::NoNValues);
    }
    if config.instances_per_n == 0 || config.n_values.contains(&0) {
        return Err(EvalError::ZeroInstances);
    }
    let classes: Vec<C> = items
        .iter()
        .map(|(c, _)| c.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.is_empty() {
        return Err(EvalError::EmptyTask);
    }
    let folds = kfold(items, config.k, config.seed)?;
    let fold_pools: Vec<FoldPools> = folds.iter().map(|f| pools(items, &classes, f)).collect();
    let per_class = shares(config.instances_per_n, classes.len());
    let per_fold: Vec<Vec<usize>> = per_class.iter().map(|&m| shares(m, config.k)).collect();
    let kind = spec.kind.feature_kind();

    let units: Vec<(usize, usize)> = (0..config.n_values.len())
        .flat_map(|ni| (0..config.k).map(move |f| (ni, f)))
        .collect();
    let results: Vec<(usize, ConfusionMatrix<C>)> = units
        .par_iter()
        .map(|&(ni, f)| {
            let n = config.n_values[ni];
            let p = &fold_pools[f];
            let mut rng = rng::stream(config.seed, &[n as u64, f as u64]);
            let mut train = Vec::new();
            for (ci, class) in classes.iter().enumerate() {
                let count = (per_class[ci] - per_fold[ci][f]).max(1);
                for _ in 0..count {
                    let inst = sample_instance(&p.train[ci], n, &mut rng)?;
                    train.push((extract(&inst, &p.vocabulary, kind), class.clone()));
                }
            }
            let model = train_nb(&train, &classes, &p.vocabulary, spec.kind, spec.alpha)?;
            let mut cm = ConfusionMatrix::new(classes.clone());
            for (ci, class) in classes.iter().enumerate() {
                for _ in 0..per_fold[ci][f] {
                    let inst = sample_instance(&p.test[ci], n, &mut rng)?;
                    let predicted = model.predict(&extract(&inst, &p.vocabulary, kind))?.class;
                    cm.record(class, &predicted);
                }
            }
            Ok((ni, cm))
        })
        .collect::<Result<_, EvalError>>()?;

    let mut confusions: Vec<ConfusionMatrix<C>> = config
        .n_values
        .iter()
        .map(|_| ConfusionMatrix::new(classes.clone()))
        .collect();
    for (ni, cm) in &results {
        confusions[*ni].merge(cm);
    }
    let points = config
        .n_values
        .iter()
        .zip(&confusions)
        .map(|(&n, cm)| {
            Ok(CurvePoint {
                n,
                accuracy: cm.accuracy()?,
                count: cm.total(),
            })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(SweepResult {
        curve: AccuracyCurve { points },
        confusions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupReport {
    pub confusion: ConfusionMatrix<Action>,
    pub accuracy: f64,
}

/// Cross-validated lookup-table accuracy on single-packet instances.
///
/// Items are traces: the trace action and its payload lengths. Per fold the
/// table is built from every training packet; test packets are pooled by
/// their true class (control lengths count as `Control`) and
/// `config.instances_per_n` packets are drawn evenly across classes.
pub fn evaluate_lookup(
    items: &[(Action, Vec<u32>)],
    control: &ControlLengths,
    fallback: Fallback,
    config: &SweepConfig,
) -> Result<LookupReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyTask);
    }
    if config.instances_per_n == 0 {
        return Err(EvalError::ZeroInstances);
    }
    let folds = kfold(items, config.k, config.seed)?;
    let all = [
        Action::Start,
        Action::Stop,
        Action::Text,
        Action::Image,
        Action::Read,
        Action::Control,
    ];
    let mut fold_data = Vec::new();
    for fold in &folds {
        let model = build_lookup_from_pairs(
            fold.train
                .iter()
                .flat_map(|&i| items[i].1.iter().map(move |&len| (len, items[i].0))),
            control,
            fallback,
        );
        let mut test_pools: Vec<Vec<u32>> = vec![Vec::new(); all.len()];
        for &i in &fold.test {
            for &len in &items[i].1 {
                let truth = model.truth(len, items[i].0);
                test_pools[all.iter().position(|&a| a == truth).expect("known action")].push(len);
            }
        }
        test_pools.iter_mut().for_each(|pool| pool.sort_unstable());
        fold_data.push((model, test_pools));
    }
    let present: Vec<usize> = (0..all.len())
        .filter(|&c| fold_data.iter().any(|(_, pools)| !pools[c].is_empty()))
        .collect();
    let per_class = shares(config.instances_per_n, present.len());
    let mut confusion = ConfusionMatrix::new(present.iter().map(|&c| all[c]).collect());
    for (f, (model, pools)) in fold_data.iter().enumerate() {
        let mut rng = rng::stream(config.seed, &[0x6c6f6f6b, f as u64]);
        for (slot, &c) in present.iter().enumerate() {
            // classes missing from this fold's test split contribute nothing
            let available: Vec<usize> = (0..folds.len()).filter(|&g| !fold_data[g].1[c].is_empty()).collect();
            let Some(rank) = available.iter().position(|&g| g == f) else {
                continue;
            };
            let count = shares(per_class[slot], available.len())[rank];
            for _ in 0..count {
                let len = sample_instance(&pools[c], 1, &mut rng)?[0];
                confusion.record(&all[c], &model.classify(len));
            }
        }
    }
    let accuracy = confusion.accuracy()?;
    Ok(LookupReport { confusion, accuracy })
}
