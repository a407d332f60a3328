//! The subcommand pipelines.

use std::path::PathBuf;

use leakscope::classifiers::{ControlLengths, Fallback, NbKind};
use leakscope::countermeasures::{evaluate_countermeasure, CountermeasureConfig, PaddingError};
use leakscope::evaluation::tasks::{action_items, language_items, os_directions, os_items};
use leakscope::evaluation::{evaluate_lookup, evaluate_regression, sweep, AccuracyCurve, ClassifierSpec, CurvePoint, EvalError};
use leakscope::ingest::{capture_to_dataset, parse_pcap, read_dataset, CaptureConfig};
use leakscope::simulator::{generate_suite, SimError};
use leakscope::Dataset;

use crate::config::{ExperimentConfig, GenerateConfig, IngestConfig, Input, LabeledCapture};
use crate::report::{ActionTask, DatasetSummary, LanguageOsError, LanguageTask, Report, TaskResult};
use crate::{write_atomic, CliError};

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::InvalidK(_) | EvalError::NoNValues | EvalError::ZeroInstances => CliError::Config(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

fn padding_error(e: PaddingError) -> CliError {
    match e {
        PaddingError::ZeroBlock => CliError::Config(e.to_string()),
        PaddingError::Eval(e) => eval_error(e),
        _ => CliError::Data(e.to_string()),
    }
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Overflow { .. } => CliError::Internal(e.to_string()),
        _ => CliError::Config(e.to_string()),
    }
}

/// Simulates every scenario under one seed.
pub fn cmd_generate(config: &GenerateConfig) -> Result<Dataset, CliError> {
    if config.scenarios.is_empty() {
        return Err(CliError::Config("no scenarios to generate".into()));
    }
    log::info!("generating {} scenarios with seed {}", config.scenarios.len(), config.seed);
    generate_suite(&config.scenarios, config.seed).map_err(sim_error)
}

fn ingest_captures(capture: &CaptureConfig, captures: &[LabeledCapture]) -> Result<Dataset, CliError> {
    capture.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let mut parts = Vec::new();
    for c in captures {
        let bytes = std::fs::read(&c.path).map_err(|e| CliError::Data(format!("{}: {e}", c.path.display())))?;
        let parsed = parse_pcap(&bytes, capture).map_err(|e| CliError::Data(format!("{}: {e}", c.path.display())))?;
        log::info!("{}: {} records, skipped {:?}", c.path.display(), parsed.records.len(), parsed.skipped);
        parts.push(capture_to_dataset(&parsed, &c.label, &c.path.display().to_string()));
    }
    Ok(Dataset::merge(parts))
}

/// Parses and labels every capture, one preprocessed trace per stream.
pub fn cmd_ingest(config: &IngestConfig) -> Result<Dataset, CliError> {
    if config.captures.is_empty() {
        return Err(CliError::Config("no captures to ingest".into()));
    }
    ingest_captures(&config.capture, &config.captures)
}

/// Loads or builds the dataset an experiment runs on.
pub fn load_input(config: &ExperimentConfig) -> Result<Dataset, CliError> {
    match &config.input {
        Input::Generate { scenarios } => cmd_generate(&GenerateConfig {
            scenarios: scenarios.clone(),
            seed: config.seed,
        }),
        Input::Dataset { path } => read_dataset(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display()))),
        Input::Pcap { capture, captures } => ingest_captures(capture, captures),
    }
}

fn spec(config: &ExperimentConfig, default: NbKind) -> ClassifierSpec {
    ClassifierSpec {
        kind: config.classifier.unwrap_or(default),
        alpha: config.alpha,
    }
}

/// Runs the configured task on `dataset`.
pub fn execute(config: &ExperimentConfig, dataset: &Dataset) -> Result<TaskResult, CliError> {
    use crate::config::Task;
    let sweep_config = config.sweep_config();
    Ok(match config.task {
        Task::OsFingerprint => {
            let items = os_items(dataset, None);
            if items.iter().map(|(c, _)| c.os).collect::<std::collections::BTreeSet<_>>().len() < 2 {
                return Err(CliError::Data("OS fingerprinting needs traces from at least two operating systems".into()));
            }
            let spec = spec(config, NbKind::Binomial);
            TaskResult::OsFingerprint {
                classifier: spec.kind,
                result: sweep(&items, spec, &sweep_config).map_err(eval_error)?,
            }
        }
        Task::ActionClassify => {
            let mut tasks = Vec::new();
            for (os, direction) in os_directions(dataset) {
                let items = action_items(dataset, os, direction);
                if items.is_empty() {
                    continue;
                }
                log::info!("action task {os} {direction}: {} traces", items.len());
                let report = evaluate_lookup(&items, &ControlLengths::default(), Fallback::NearestLength, &sweep_config).map_err(eval_error)?;
                tasks.push(ActionTask { os, direction, report });
            }
            if tasks.is_empty() {
                return Err(CliError::Data("no action traces".into()));
            }
            let macro_accuracy = tasks.iter().map(|t| t.report.accuracy).sum::<f64>() / tasks.len() as f64;
            TaskResult::ActionClassify { tasks, macro_accuracy }
        }
        Task::LanguageClassify => {
            let spec = spec(config, NbKind::Multinomial);
            let mut tasks = Vec::new();
            for (os, direction) in os_directions(dataset) {
                let items = language_items(dataset, os, direction);
                if items.is_empty() {
                    continue;
                }
                log::info!("language task {os} {direction}: {} traces", items.len());
                let result = sweep(&items, spec, &sweep_config).map_err(eval_error)?;
                tasks.push(LanguageTask { os, direction, result });
            }
            if tasks.is_empty() {
                return Err(CliError::Data("no text traces".into()));
            }
            let pooled = AccuracyCurve {
                points: config
                    .n_values
                    .iter()
                    .enumerate()
                    .map(|(i, &n)| {
                        let (correct, total) = tasks.iter().fold((0, 0), |(c, t), task| {
                            let cm = &task.result.confusions[i];
                            (c + cm.correct(), t + cm.total())
                        });
                        CurvePoint {
                            n,
                            accuracy: correct as f64 / total as f64,
                            count: total,
                        }
                    })
                    .collect(),
            };
            TaskResult::LanguageClassify {
                classifier: spec.kind,
                tasks,
                pooled,
            }
        }
        Task::LengthRegress => {
            let report = evaluate_regression(dataset, config.regression_target, config.k, config.seed).map_err(eval_error)?;
            let by_language = report.by_language();
            let by_language_os = report
                .by_language_os()
                .into_iter()
                .map(|((language, os), mae)| LanguageOsError { language, os, mae })
                .collect();
            TaskResult::LengthRegress {
                report,
                by_language,
                by_language_os,
            }
        }
        Task::CountermeasureEval => {
            let padding = config
                .padding
                .ok_or_else(|| CliError::Config("countermeasure_eval needs a padding strategy".into()))?;
            let cm_config = CountermeasureConfig {
                sweep: sweep_config,
                os_n: config.os_n,
                language_n: config.language_n,
            };
            let report = evaluate_countermeasure(dataset, &padding, &config.attacks, &cm_config).map_err(padding_error)?;
            TaskResult::CountermeasureEval { report }
        }
    })
}

/// Validates `config`, runs it, and writes `<task>_report.json` (plus
/// `<task>_curve.csv` for curve tasks) into `config.out`.
pub fn cmd_run(config: &ExperimentConfig) -> Result<(Report, Vec<PathBuf>), CliError> {
    config.validate()?;
    let dataset = load_input(config)?;
    log::info!("dataset: {} traces, {} packets", dataset.traces.len(), dataset.packet_count());
    let result = execute(config, &dataset)?;
    let report = Report {
        tool: "leakscope".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        dataset: DatasetSummary {
            source: dataset.metadata.source.clone(),
            seed: dataset.metadata.seed,
            traces: dataset.traces.len(),
            packets: dataset.packet_count(),
        },
        result,
    };
    let name = config.task.name();
    let mut written = Vec::new();
    if let Some(curve) = report.result.curve() {
        let path = config.out.join(format!("{name}_curve.csv"));
        write_atomic(&path, curve.to_csv().as_bytes())?;
        written.push(path);
    }
    let path = config.out.join(format!("{name}_report.json"));
    write_atomic(&path, report.to_json().as_bytes())?;
    written.push(path);
    Ok((report, written))
}
