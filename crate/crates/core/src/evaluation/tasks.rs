//! Turning a dataset into the per-trace items each attack consumes.
//!
//! Every attack assumes the earlier stages were solved: action and language
//! tasks run per (os, direction), the language task sees only text traces.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::features::FeatureKey;
use crate::trace::{Action, Dataset, Direction, Language, LabeledTrace, Os};

/// Class of the OS fingerprinting task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OsClass {
    pub os: Os,
    /// `None` when the task is already restricted to one direction.
    pub direction: Option<Direction>,
}

impl fmt::Display for OsClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.direction {
            Some(d) => write!(f, "{}-{}", self.os, d),
            None => write!(f, "{}", self.os),
        }
    }
}

fn keys_in(trace: &LabeledTrace, direction: Direction) -> Vec<FeatureKey> {
    trace
        .packets
        .iter()
        .filter(|p| p.direction == direction)
        .map(FeatureKey::from)
        .collect()
}

/// OS fingerprinting items: every packet of every trace with a known OS.
///
/// With `only = None` classes are (os, direction); otherwise only packets in
/// that direction are used and classes are the OS alone.
pub fn os_items(dataset: &Dataset, only: Option<Direction>) -> Vec<(OsClass, Vec<FeatureKey>)> {
    let mut out = Vec::new();
    for trace in dataset.traces.iter().filter(|t| t.label.os != Os::Unknown) {
        for direction in Direction::ALL {
            if only.is_some_and(|d| d != direction) {
                continue;
            }
            let keys = keys_in(trace, direction);
            if !keys.is_empty() {
                let class = OsClass {
                    os: trace.label.os,
                    direction: if only.is_some() { None } else { Some(direction) },
                };
                out.push((class, keys));
            }
        }
    }
    out
}

/// (os, direction) pairs present in the dataset.
pub fn os_directions(dataset: &Dataset) -> Vec<(Os, Direction)> {
    dataset
        .traces
        .iter()
        .flat_map(|t| t.packets.iter().map(move |p| (t.label.os, p.direction)))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Action items for one (os, direction): the trace action and its payload
/// lengths in that direction.
pub fn action_items(dataset: &Dataset, os: Os, direction: Direction) -> Vec<(Action, Vec<u32>)> {
    dataset
        .traces
        .iter()
        .filter(|t| t.label.os == os && t.label.action != Action::Control)
        .filter_map(|t| {
            let lens: Vec<u32> = t
                .packets
                .iter()
                .filter(|p| p.direction == direction)
                .map(|p| p.payload_length)
                .collect();
            (!lens.is_empty()).then_some((t.label.action, lens))
        })
        .collect()
}

/// Language items for one (os, direction): the content packet (largest
/// payload) of each text trace.
pub fn language_items(dataset: &Dataset, os: Os, direction: Direction) -> Vec<(Language, Vec<FeatureKey>)> {
    dataset
        .traces
        .iter()
        .filter(|t| t.label.os == os && t.label.action == Action::Text && t.label.language != Language::None)
        .filter_map(|t| {
            let content = t
                .packets
                .iter()
                .filter(|p| p.direction == direction)
                .max_by_key(|p| p.payload_length)?;
            Some((t.label.language, vec![FeatureKey::from(content)]))
        })
        .collect()
}
