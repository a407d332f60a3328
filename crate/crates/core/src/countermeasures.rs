//! Padding countermeasures, their byte cost, and how much they blunt each
//! attack.
//!
//! Uniform-to-max padding replaces every payload `len` with
//! `len + U{0, ..., max - len}`, where `max` is the largest payload seen for
//! the service. The expected cost of a packet is therefore `(max - len) / 2`,
//! which [`expected_overhead`] computes in closed form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{build_lookup_from_pairs, ControlLengths, Fallback};
use crate::evaluation::tasks::{language_items, os_directions, os_items};
use crate::evaluation::{evaluate_lookup, evaluate_regression, sweep, ClassifierSpec, EvalError, RegressionTarget, SweepConfig};
use crate::rng;
use crate::trace::{Action, Dataset, Direction, LabeledTrace, Os, Service};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PaddingError {
    #[error("padding maximum {max} is below an observed payload of {found} bytes ({service})")]
    MaxTooSmall { service: Service, max: u32, found: u32 },
    #[error("block size must be at least 1")]
    ZeroBlock,
    #[error("datasets differ in shape at trace {trace}")]
    ShapeMismatch { trace: usize },
    #[error("dataset has no packets")]
    Empty,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Upper bound for uniform-to-max padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "MaxRepr", into = "MaxRepr")]
pub enum PadMax {
    /// Largest payload observed per service in the reference data.
    #[default]
    Auto,
    Bytes(u32),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MaxRepr {
    Bytes(u32),
    Word(String),
}

impl TryFrom<MaxRepr> for PadMax {
    type Error = String;

    fn try_from(r: MaxRepr) -> Result<Self, String> {
        match r {
            MaxRepr::Bytes(b) => Ok(PadMax::Bytes(b)),
            MaxRepr::Word(w) if w == "auto" => Ok(PadMax::Auto),
            MaxRepr::Word(w) => Err(format!("expected \"auto\" or a byte count, got {w:?}")),
        }
    }
}

impl From<PadMax> for MaxRepr {
    fn from(m: PadMax) -> Self {
        match m {
            PadMax::Auto => MaxRepr::Word("auto".into()),
            PadMax::Bytes(b) => MaxRepr::Bytes(b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PaddingStrategy {
    #[default]
    None,
    BlockQuantize { block: u32 },
    UniformToMax {
        #[serde(default)]
        max: PadMax,
    },
}

impl fmt::Display for PaddingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PaddingStrategy::None => f.write_str("none"),
            PaddingStrategy::BlockQuantize { block } => write!(f, "block_quantize({block})"),
            PaddingStrategy::UniformToMax { max: PadMax::Auto } => f.write_str("uniform_to_max(auto)"),
            PaddingStrategy::UniformToMax { max: PadMax::Bytes(m) } => write!(f, "uniform_to_max({m})"),
        }
    }
}

/// A strategy with its maxima fixed, ready to apply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResolvedPadding {
    None,
    BlockQuantize(u32),
    UniformToMax(BTreeMap<Service, u32>),
}

/// Largest payload per service.
pub fn service_maxima(dataset: &Dataset) -> BTreeMap<Service, u32> {
    let mut out: BTreeMap<Service, u32> = BTreeMap::new();
    for t in &dataset.traces {
        for p in &t.packets {
            let m = out.entry(t.label.service).or_default();
            *m = (*m).max(p.payload_length);
        }
    }
    out
}

impl PaddingStrategy {
    /// Fixes the padding maxima. `Auto` takes the per-service maximum of
    /// `reference`, normally the training data.
    pub fn resolve(&self, reference: &Dataset) -> Result<ResolvedPadding, PaddingError> {
        Ok(match *self {
            PaddingStrategy::None => ResolvedPadding::None,
            PaddingStrategy::BlockQuantize { block: 0 } => return Err(PaddingError::ZeroBlock),
            PaddingStrategy::BlockQuantize { block } => ResolvedPadding::BlockQuantize(block),
            PaddingStrategy::UniformToMax { max: PadMax::Auto } => ResolvedPadding::UniformToMax(service_maxima(reference)),
            PaddingStrategy::UniformToMax { max: PadMax::Bytes(m) } => {
                ResolvedPadding::UniformToMax(Service::ALL.iter().map(|&s| (s, m)).collect())
            }
        })
    }
}

fn pad_trace<R: Rng>(trace: &LabeledTrace, padding: &ResolvedPadding, rng: &mut R) -> Result<LabeledTrace, PaddingError> {
    let mut out = trace.clone();
    for p in &mut out.packets {
        let len = p.payload_length;
        p.payload_length = match padding {
            ResolvedPadding::None => len,
            ResolvedPadding::BlockQuantize(b) => len.div_ceil(*b) * b,
            ResolvedPadding::UniformToMax(maxima) => {
                let service = trace.label.service;
                // a service absent from the reference has nothing to pad to
                let max = maxima.get(&service).copied().unwrap_or(0);
                if len > max {
                    return Err(PaddingError::MaxTooSmall { service, max, found: len });
                }
                len + rng.random_range(0..=max - len)
            }
        };
    }
    Ok(out)
}

/// Pads every packet of `dataset`. Trace `i` draws from its own stream under
/// `seed`, so the result does not depend on scheduling.
pub fn apply_resolved(dataset: &Dataset, padding: &ResolvedPadding, seed: u64) -> Result<Dataset, PaddingError> {
    let traces = dataset
        .traces
        .par_iter()
        .enumerate()
        .map(|(i, t)| pad_trace(t, padding, &mut rng::stream(seed, &[0x7061_6464, i as u64])))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset {
        format_version: dataset.format_version,
        metadata: dataset.metadata.clone(),
        traces,
    })
}

/// Resolves `strategy` against `dataset` itself and pads it.
pub fn apply_padding(dataset: &Dataset, strategy: &PaddingStrategy, seed: u64) -> Result<Dataset, PaddingError> {
    apply_resolved(dataset, &strategy.resolve(dataset)?, seed)
}

/// Per-packet padding cost for one (service, os).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub service: Service,
    pub os: Os,
    pub packets: usize,
    pub mean_original_bytes: f64,
    pub mean_added_bytes: f64,
    /// `100 × mean added / mean original`.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub groups: Vec<OverheadRow>,
    pub packets: usize,
    pub mean_original_bytes: f64,
    pub mean_added_bytes: f64,
    pub percent: f64,
}

impl OverheadReport {
    pub fn group(&self, service: Service, os: Os) -> Option<&OverheadRow> {
        self.groups.iter().find(|g| g.service == service && g.os == os)
    }
}

/// Builds a report from `(service, os, original, added)` per packet.
fn summarize(rows: impl Iterator<Item = (Service, Os, f64, f64)>) -> Result<OverheadReport, PaddingError> {
    let mut acc: BTreeMap<(Service, Os), (usize, f64, f64)> = BTreeMap::new();
    for (s, o, orig, added) in rows {
        let e = acc.entry((s, o)).or_default();
        e.0 += 1;
        e.1 += orig;
        e.2 += added;
    }
    let (n, orig, added) = acc
        .values()
        .fold((0, 0.0, 0.0), |(n, a, b), &(m, x, y)| (n + m, a + x, b + y));
    if n == 0 {
        return Err(PaddingError::Empty);
    }
    let percent = |orig: f64, added: f64| if orig == 0.0 { 0.0 } else { 100.0 * added / orig };
    Ok(OverheadReport {
        groups: acc
            .into_iter()
            .map(|((service, os), (n, o, a))| OverheadRow {
                service,
                os,
                packets: n,
                mean_original_bytes: o / n as f64,
                mean_added_bytes: a / n as f64,
                percent: percent(o, a),
            })
            .collect(),
        packets: n,
        mean_original_bytes: orig / n as f64,
        mean_added_bytes: added / n as f64,
        percent: percent(orig, added),
    })
}

/// Measured cost of padding `original` into `padded`. Both must hold the same
/// traces, labels and packet counts in the same order.
pub fn overhead(original: &Dataset, padded: &Dataset) -> Result<OverheadReport, PaddingError> {
    if original.traces.len() != padded.traces.len() {
        return Err(PaddingError::ShapeMismatch {
            trace: original.traces.len().min(padded.traces.len()),
        });
    }
    for (i, (a, b)) in original.traces.iter().zip(&padded.traces).enumerate() {
        if a.label != b.label || a.packets.len() != b.packets.len() {
            return Err(PaddingError::ShapeMismatch { trace: i });
        }
    }
    summarize(original.traces.iter().zip(&padded.traces).flat_map(|(a, b)| {
        a.packets.iter().zip(&b.packets).map(move |(p, q)| {
            let orig = f64::from(p.payload_length);
            (a.label.service, a.label.os, orig, f64::from(q.payload_length) - orig)
        })
    }))
}

/// Expected cost of `padding` on `dataset`: `(max - len) / 2` per packet for
/// uniform-to-max, the exact round-up for block quantization.
pub fn expected_overhead(dataset: &Dataset, padding: &ResolvedPadding) -> Result<OverheadReport, PaddingError> {
    let mut rows = Vec::with_capacity(dataset.packet_count());
    for t in &dataset.traces {
        let s = t.label.service;
        for p in &t.packets {
            let len = p.payload_length;
            let added = match padding {
                ResolvedPadding::None => 0.0,
                ResolvedPadding::BlockQuantize(b) => f64::from(len.div_ceil(*b) * b - len),
                ResolvedPadding::UniformToMax(maxima) => {
                    let max = maxima.get(&s).copied().unwrap_or(0);
                    if len > max {
                        return Err(PaddingError::MaxTooSmall { service: s, max, found: len });
                    }
                    f64::from(max - len) / 2.0
                }
            };
            rows.push((s, t.label.os, f64::from(len), added));
        }
    }
    summarize(rows.into_iter())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attack {
    OsFingerprint,
    ActionClassify,
    LanguageClassify,
    LengthRegress,
}

impl Attack {
    pub const ALL: [Attack; 4] = [
        Attack::OsFingerprint,
        Attack::ActionClassify,
        Attack::LanguageClassify,
        Attack::LengthRegress,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountermeasureConfig {
    #[serde(flatten)]
    pub sweep: SweepConfig,
    /// Packets per instance for the OS attack.
    #[serde(default = "default_os_n")]
    pub os_n: usize,
    /// Packets per instance for the language attack.
    #[serde(default = "default_language_n")]
    pub language_n: usize,
}

fn default_os_n() -> usize {
    5
}

fn default_language_n() -> usize {
    50
}

impl Default for CountermeasureConfig {
    fn default() -> Self {
        CountermeasureConfig {
            sweep: SweepConfig::default(),
            os_n: default_os_n(),
            language_n: default_language_n(),
        }
    }
}

/// One task of an attack, e.g. the action task for iOS traffic to the
/// service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task: String,
    pub before: f64,
    pub after: f64,
    /// Accuracy of a uniform guess (classification only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chance: Option<f64>,
    /// Error of the constant-mean predictor on the padded data (regression
    /// only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub attack: Attack,
    /// `accuracy` or `mae`.
    pub metric: String,
    pub tasks: Vec<TaskOutcome>,
}

impl AttackOutcome {
    fn mean(&self, f: impl Fn(&TaskOutcome) -> Option<f64>) -> Option<f64> {
        let v: Vec<f64> = self.tasks.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn before(&self) -> f64 {
        self.mean(|t| Some(t.before)).unwrap_or(f64::NAN)
    }

    pub fn after(&self) -> f64 {
        self.mean(|t| Some(t.after)).unwrap_or(f64::NAN)
    }

    pub fn chance(&self) -> Option<f64> {
        self.mean(|t| t.chance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountermeasureReport {
    pub strategy: PaddingStrategy,
    pub resolved: ResolvedPadding,
    pub overhead: OverheadReport,
    pub expected_overhead: OverheadReport,
    pub attacks: Vec<AttackOutcome>,
}

impl CountermeasureReport {
    pub fn attack(&self, attack: Attack) -> Option<&AttackOutcome> {
        self.attacks.iter().find(|a| a.attack == attack)
    }
}

/// Action items whose classes are fixed by the unpadded data: a packet is
/// `Control` when its original length is a control length of `original`,
/// otherwise it takes the trace action. Lengths come from `padded`.
fn labeled_action_items(original: &Dataset, padded: &Dataset, os: Os, direction: Direction) -> Vec<(Action, Vec<u32>)> {
    let control = build_lookup_from_pairs(
        original
            .traces
            .iter()
            .filter(|t| t.label.os == os && t.label.action != Action::Control)
            .flat_map(|t| t.packets.iter().filter(|p| p.direction == direction).map(move |p| (p.payload_length, t.label.action))),
        &ControlLengths::default(),
        Fallback::NearestLength,
    )
    .control_lengths;
    let mut out = Vec::new();
    for (a, b) in original.traces.iter().zip(&padded.traces) {
        if a.label.os != os || a.label.action == Action::Control {
            continue;
        }
        let (mut own, mut ctl) = (Vec::new(), Vec::new());
        for (p, q) in a.packets.iter().zip(&b.packets).filter(|(p, _)| p.direction == direction) {
            if control.contains(&p.payload_length) {
                ctl.push(q.payload_length);
            } else {
                own.push(q.payload_length);
            }
        }
        if !own.is_empty() {
            out.push((a.label.action, own));
        }
        if !ctl.is_empty() {
            out.push((Action::Control, ctl));
        }
    }
    out
}

fn class_count<C: Ord + Clone>(items: &[(C, impl Sized)]) -> usize {
    items.iter().map(|(c, _)| c.clone()).collect::<BTreeSet<C>>().len()
}

fn run_attack(
    attack: Attack,
    original: &Dataset,
    padded: &Dataset,
    config: &CountermeasureConfig,
) -> Result<AttackOutcome, PaddingError> {
    let mut tasks = Vec::new();
    let sweep_at = |n: usize| SweepConfig {
        n_values: vec![n],
        ..config.sweep.clone()
    };
    let pairs = os_directions(original);
    match attack {
        Attack::OsFingerprint => {
            for direction in Direction::ALL {
                let (a, b) = (os_items(original, Some(direction)), os_items(padded, Some(direction)));
                if class_count(&a) < 2 {
                    continue;
                }
                let run = |items| -> Result<f64, EvalError> {
                    let r = sweep(items, ClassifierSpec::binomial(), &sweep_at(config.os_n))?;
                    Ok(r.curve.points[0].accuracy)
                };
                tasks.push(TaskOutcome {
                    task: format!("os-{direction}"),
                    before: run(&a)?,
                    after: run(&b)?,
                    chance: Some(1.0 / class_count(&a) as f64),
                    baseline_after: None,
                });
            }
        }
        Attack::ActionClassify => {
            let fixed = ControlLengths::Fixed(BTreeSet::new());
            for &(os, direction) in &pairs {
                let a = labeled_action_items(original, original, os, direction);
                let b = labeled_action_items(original, padded, os, direction);
                if class_count(&a) < 2 {
                    continue;
                }
                let run = |items: &[(Action, Vec<u32>)]| -> Result<f64, EvalError> {
                    Ok(evaluate_lookup(items, &fixed, Fallback::NearestLength, &config.sweep)?.accuracy)
                };
                tasks.push(TaskOutcome {
                    task: format!("action-{os}-{direction}"),
                    before: run(&a)?,
                    after: run(&b)?,
                    chance: Some(1.0 / class_count(&a) as f64),
                    baseline_after: None,
                });
            }
        }
        Attack::LanguageClassify => {
            for &(os, direction) in &pairs {
                let (a, b) = (language_items(original, os, direction), language_items(padded, os, direction));
                if class_count(&a) < 2 {
                    continue;
                }
                let run = |items| -> Result<f64, EvalError> {
                    let r = sweep(items, ClassifierSpec::multinomial(), &sweep_at(config.language_n))?;
                    Ok(r.curve.points[0].accuracy)
                };
                tasks.push(TaskOutcome {
                    task: format!("language-{os}-{direction}"),
                    before: run(&a)?,
                    after: run(&b)?,
                    chance: Some(1.0 / class_count(&a) as f64),
                    baseline_after: None,
                });
            }
        }
        Attack::LengthRegress => {
            let (k, seed) = (config.sweep.k, config.sweep.seed);
            let before = evaluate_regression(original, RegressionTarget::PlaintextChars, k, seed)?;
            let after = evaluate_regression(padded, RegressionTarget::PlaintextChars, k, seed)?;
            for (g, h) in before.groups.iter().zip(&after.groups) {
                tasks.push(TaskOutcome {
                    task: format!("length-{}-{}-{}", g.group.os, g.group.direction, g.group.language),
                    before: g.mae,
                    after: h.mae,
                    chance: None,
                    baseline_after: Some(h.baseline_mae),
                });
            }
        }
    }
    Ok(AttackOutcome {
        attack,
        metric: if attack == Attack::LengthRegress { "mae" } else { "accuracy" }.into(),
        tasks,
    })
}

/// Runs each attack in `attacks` on `dataset` and on its padded copy.
///
/// `Auto` maxima come from `dataset` itself. Classification attacks report
/// accuracy per task (OS per direction, action and language per
/// (os, direction)); the length attack reports the mean absolute error per
/// regression group.
pub fn evaluate_countermeasure(
    dataset: &Dataset,
    strategy: &PaddingStrategy,
    attacks: &[Attack],
    config: &CountermeasureConfig,
) -> Result<CountermeasureReport, PaddingError> {
    let resolved = strategy.resolve(dataset)?;
    let padded = apply_resolved(dataset, &resolved, config.sweep.seed)?;
    let overhead = overhead(dataset, &padded)?;
    let expected = expected_overhead(dataset, &resolved)?;
    let attacks = attacks
        .iter()
        .map(|&a| {
            log::info!("countermeasure: {a:?} under {strategy}");
            run_attack(a, dataset, &padded, config)
        })
        .collect::<Result<_, _>>()?;
    Ok(CountermeasureReport {
        strategy: *strategy,
        resolved,
        overhead,
        expected_overhead: expected,
        attacks,
    })
}
