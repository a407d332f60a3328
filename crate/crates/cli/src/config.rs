//! Experiment, generation and ingest configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use leakscope::classifiers::NbKind;
use leakscope::countermeasures::{Attack, PaddingStrategy};
use leakscope::evaluation::{RegressionTarget, SweepConfig};
use leakscope::ingest::CaptureConfig;
use leakscope::simulator::ScenarioConfig;
use leakscope::{Label, Os, Service};

use crate::CliError;

/// The shipped iMessage experiment: both operating systems, every action.
pub fn default_scenarios() -> Vec<ScenarioConfig> {
    vec![
        ScenarioConfig::new(Service::IMessage, Os::Ios),
        ScenarioConfig::new(Service::IMessage, Os::Osx),
    ]
}

/// One capture file and the ground truth of everything in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledCapture {
    pub path: PathBuf,
    pub label: Label,
}

/// Where an experiment's traces come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Input {
    /// Simulated traces, one scenario after another.
    Generate {
        #[serde(default = "default_scenarios")]
        scenarios: Vec<ScenarioConfig>,
    },
    /// A canonical dataset file.
    Dataset { path: PathBuf },
    /// Classic pcap files, one label per file.
    Pcap {
        #[serde(default)]
        capture: CaptureConfig,
        captures: Vec<LabeledCapture>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    OsFingerprint,
    ActionClassify,
    LanguageClassify,
    LengthRegress,
    CountermeasureEval,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::OsFingerprint => "os_fingerprint",
            Task::ActionClassify => "action_classify",
            Task::LanguageClassify => "language_classify",
            Task::LengthRegress => "length_regress",
            Task::CountermeasureEval => "countermeasure_eval",
        }
    }
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

fn default_alpha() -> f64 {
    1.0
}

fn default_os_n() -> usize {
    5
}

fn default_language_n() -> usize {
    50
}

fn default_attacks() -> Vec<Attack> {
    Attack::ALL.to_vec()
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// A complete `run` configuration. Everything but `input` and `task` has a
/// default; the report stores this struct fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub input: Input,
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_n_values")]
    pub n_values: Vec<usize>,
    #[serde(default = "default_instances")]
    pub instances_per_n: usize,
    /// Laplace smoothing of the naive Bayes attacks.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Overrides the classifier of the OS (binomial) or language
    /// (multinomial) task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<NbKind>,
    #[serde(default = "default_regression_target")]
    pub regression_target: RegressionTarget,
    /// Required by `countermeasure_eval`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<PaddingStrategy>,
    #[serde(default = "default_attacks")]
    pub attacks: Vec<Attack>,
    /// Packets per instance for the OS and language attacks under padding.
    #[serde(default = "default_os_n")]
    pub os_n: usize,
    #[serde(default = "default_language_n")]
    pub language_n: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_regression_target() -> RegressionTarget {
    RegressionTarget::PlaintextChars
}

impl ExperimentConfig {
    pub fn new(input: Input, task: Task) -> Self {
        ExperimentConfig {
            input,
            task,
            seed: 0,
            k: default_k(),
            n_values: default_n_values(),
            instances_per_n: default_instances(),
            alpha: default_alpha(),
            classifier: None,
            regression_target: default_regression_target(),
            padding: None,
            attacks: default_attacks(),
            os_n: default_os_n(),
            language_n: default_language_n(),
            out: default_out(),
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            k: self.k,
            n_values: self.n_values.clone(),
            instances_per_n: self.instances_per_n,
            seed: self.seed,
        }
    }

    /// Checks everything that can be checked before touching any data.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return bad("n_values must be non-empty and every n at least 1".into());
        }
        if self.instances_per_n == 0 || self.os_n == 0 || self.language_n == 0 {
            return bad("instances_per_n, os_n and language_n must be at least 1".into());
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        match &self.input {
            Input::Generate { scenarios } => {
                if scenarios.is_empty() {
                    return bad("generate input needs at least one scenario".into());
                }
                for (i, s) in scenarios.iter().enumerate() {
                    s.validate().map_err(|e| CliError::Config(format!("scenario {i}: {e}")))?;
                }
            }
            Input::Dataset { .. } => {}
            Input::Pcap { capture, captures } => {
                if captures.is_empty() {
                    return bad("pcap input needs at least one capture".into());
                }
                capture.validate().map_err(|e| CliError::Config(e.to_string()))?;
            }
        }
        if self.task == Task::CountermeasureEval {
            if self.padding.is_none() {
                return bad("countermeasure_eval needs a padding strategy".into());
            }
            if self.attacks.is_empty() {
                return bad("countermeasure_eval needs at least one attack".into());
            }
        }
        Ok(())
    }
}

/// `generate` configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<ScenarioConfig>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            scenarios: default_scenarios(),
            seed: 0,
        }
    }
}

/// `ingest` configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    #[serde(default)]
    pub capture: CaptureConfig,
    pub captures: Vec<LabeledCapture>,
}

/// Reads and parses a JSON configuration file. Both a missing file and bad
/// JSON are configuration errors.
pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
