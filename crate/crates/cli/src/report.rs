//! Report documents and their text rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use leakscope::classifiers::NbKind;
use leakscope::countermeasures::CountermeasureReport;
use leakscope::evaluation::tasks::OsClass;
use leakscope::evaluation::{AccuracyCurve, LookupReport, RegressionReport, SweepResult};
use leakscope::{Direction, Language, Os};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub traces: usize,
    pub packets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionTask {
    pub os: Os,
    pub direction: Direction,
    pub report: LookupReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageTask {
    pub os: Os,
    pub direction: Direction,
    pub result: SweepResult<Language>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageOsError {
    pub language: Language,
    pub os: Os,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskResult {
    OsFingerprint {
        classifier: NbKind,
        result: SweepResult<OsClass>,
    },
    ActionClassify {
        tasks: Vec<ActionTask>,
        /// Mean of the per-task accuracies.
        macro_accuracy: f64,
    },
    LanguageClassify {
        classifier: NbKind,
        tasks: Vec<LanguageTask>,
        /// All tasks' confusion counts added together.
        pooled: AccuracyCurve,
    },
    LengthRegress {
        report: RegressionReport,
        by_language: BTreeMap<Language, f64>,
        by_language_os: Vec<LanguageOsError>,
    },
    CountermeasureEval {
        report: CountermeasureReport,
    },
}

impl TaskResult {
    /// The accuracy-versus-n curve written to `<task>_curve.csv`, for the
    /// tasks that have one.
    pub fn curve(&self) -> Option<AccuracyCurve> {
        match self {
            TaskResult::OsFingerprint { result, .. } => Some(result.curve.clone()),
            TaskResult::ActionClassify { tasks, macro_accuracy } => Some(AccuracyCurve {
                points: vec![leakscope::evaluation::CurvePoint {
                    n: 1,
                    accuracy: *macro_accuracy,
                    count: tasks.iter().map(|t| t.report.confusion.total()).sum(),
                }],
            }),
            TaskResult::LanguageClassify { pooled, .. } => Some(pooled.clone()),
            TaskResult::LengthRegress { .. } | TaskResult::CountermeasureEval { .. } => None,
        }
    }
}

/// A `run` report. It carries the resolved configuration, so the experiment
/// can be repeated from the report alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub result: TaskResult,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

fn curve_table(out: &mut String, curve: &AccuracyCurve) {
    let _ = writeln!(out, "{:>4} {:>9} {:>7}", "n", "accuracy", "count");
    for p in &curve.points {
        let _ = writeln!(out, "{:>4} {:>9.4} {:>7}", p.n, p.accuracy, p.count);
    }
}

/// Human-readable tables for a report.
pub fn render(report: &Report) -> String {
    let mut out = String::new();
    let d = &report.dataset;
    let _ = writeln!(
        out,
        "{} {} | task {} | seed {} | {} traces, {} packets from {}\n",
        report.tool,
        report.version,
        report.config.task.name(),
        report.config.seed,
        d.traces,
        d.packets,
        d.source
    );
    match &report.result {
        TaskResult::OsFingerprint { classifier, result } => {
            let _ = writeln!(out, "OS fingerprinting ({classifier:?} naive Bayes)");
            curve_table(&mut out, &result.curve);
            if let Some(p) = result.curve.points.last() {
                let _ = writeln!(out, "\nconfusion at n = {}", p.n);
                out.push_str(&result.confusions[result.confusions.len() - 1].render());
            }
        }
        TaskResult::ActionClassify { tasks, macro_accuracy } => {
            for t in tasks {
                let _ = writeln!(out, "actions, {} {}: accuracy {:.4}", t.os, t.direction, t.report.accuracy);
                out.push_str(&t.report.confusion.render());
                out.push('\n');
            }
            let _ = writeln!(out, "macro accuracy {macro_accuracy:.4}");
        }
        TaskResult::LanguageClassify { classifier, tasks, pooled } => {
            for t in tasks {
                let _ = writeln!(out, "languages, {} {} ({classifier:?} naive Bayes)", t.os, t.direction);
                curve_table(&mut out, &t.result.curve);
                if let Some(cm) = t.result.confusions.last() {
                    out.push_str(&cm.render());
                }
                out.push('\n');
            }
            let _ = writeln!(out, "pooled");
            curve_table(&mut out, pooled);
        }
        TaskResult::LengthRegress { report, by_language, by_language_os } => {
            let _ = writeln!(out, "{:<10} {:<5} {:<5} {:<9} {:>6} {:>9} {:>9}", "language", "os", "dir", "service", "count", "mae", "baseline");
            for g in &report.groups {
                let _ = writeln!(
                    out,
                    "{:<10} {:<5} {:<5} {:<9} {:>6} {:>9.3} {:>9.3}",
                    g.group.language, g.group.os, g.group.direction, g.group.service, g.count, g.mae, g.baseline_mae
                );
            }
            let _ = writeln!(out, "\nper language");
            for (l, e) in by_language {
                let _ = writeln!(out, "{l:<10} {e:>9.3}");
            }
            let _ = writeln!(out, "\nper language and os");
            for r in by_language_os {
                let _ = writeln!(out, "{:<10} {:<5} {:>9.3}", r.language, r.os, r.mae);
            }
            let _ = writeln!(out, "\noverall mae {:.3} (baseline {:.3})", report.overall_mae, report.overall_baseline_mae);
        }
        TaskResult::CountermeasureEval { report } => {
            let o = &report.overhead;
            let _ = writeln!(out, "padding {}", report.strategy);
            let _ = writeln!(
                out,
                "overhead {:.1} bytes/packet ({:.1}%), expected {:.1}",
                o.mean_added_bytes, o.percent, report.expected_overhead.mean_added_bytes
            );
            for g in &o.groups {
                let _ = writeln!(out, "  {} {}: {:.1} bytes ({:.1}%) over {} packets", g.service, g.os, g.mean_added_bytes, g.percent, g.packets);
            }
            let _ = writeln!(out, "\n{:<28} {:>8} {:>8} {:>8}", "task", "before", "after", "ref");
            for a in &report.attacks {
                for t in &a.tasks {
                    let reference = t.chance.or(t.baseline_after).unwrap_or(f64::NAN);
                    let _ = writeln!(out, "{:<28} {:>8.3} {:>8.3} {:>8.3}", t.task, t.before, t.after, reference);
                }
            }
            let _ = writeln!(out, "(ref: chance accuracy, or the constant-mean error after padding)");
        }
    }
    out
}
