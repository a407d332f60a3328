use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::trace::{Action, Dataset};

/// What to answer for a length never seen in training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Classify as the closest stored length; ties go to the smaller one.
    #[default]
    NearestLength,
    ControlClass,
}

/// How control lengths are chosen when building a table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlLengths {
    /// Lengths observed under at least this many distinct actions.
    Detect { min_classes: usize },
    Fixed(BTreeSet<u32>),
}

impl Default for ControlLengths {
    fn default() -> Self {
        ControlLengths::Detect { min_classes: 3 }
    }
}

/// Payload length to per-class training counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookupTableModel {
    // As a list of entries: integer map keys do not survive the flattened
    // model file.
    #[serde(with = "table_entries")]
    pub table: BTreeMap<u32, BTreeMap<Action, u64>>,
    pub control_lengths: BTreeSet<u32>,
    pub fallback: Fallback,
}

mod table_entries {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::trace::Action;

    #[derive(Serialize, Deserialize)]
    struct Entry {
        len: u32,
        counts: BTreeMap<Action, u64>,
    }

    pub fn serialize<S: Serializer>(table: &BTreeMap<u32, BTreeMap<Action, u64>>, s: S) -> Result<S::Ok, S::Error> {
        let entries: Vec<Entry> = table
            .iter()
            .map(|(&len, counts)| Entry {
                len,
                counts: counts.clone(),
            })
            .collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u32, BTreeMap<Action, u64>>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(entries.into_iter().map(|e| (e.len, e.counts)).collect())
    }
}

/// Tallies `(length, action)` observations into a table. Every observation
/// of a control length is counted under [`Action::Control`].
pub fn build_lookup_from_pairs(
    pairs: impl IntoIterator<Item = (u32, Action)>,
    control: &ControlLengths,
    fallback: Fallback,
) -> LookupTableModel {
    let mut raw: BTreeMap<u32, BTreeMap<Action, u64>> = BTreeMap::new();
    for (len, action) in pairs {
        *raw.entry(len).or_default().entry(action).or_default() += 1;
    }
    let control_lengths: BTreeSet<u32> = match control {
        ControlLengths::Fixed(set) => set.clone(),
        ControlLengths::Detect { min_classes } => raw
            .iter()
            .filter(|(_, classes)| classes.len() >= *min_classes)
            .map(|(&len, _)| len)
            .collect(),
    };
    let table = raw
        .into_iter()
        .map(|(len, classes)| {
            if control_lengths.contains(&len) {
                (len, BTreeMap::from([(Action::Control, classes.values().sum())]))
            } else {
                (len, classes)
            }
        })
        .collect();
    LookupTableModel {
        table,
        control_lengths,
        fallback,
    }
}

/// Table over every packet of `training`, each labeled with its trace's action.
pub fn build_lookup(training: &Dataset, control: &ControlLengths, fallback: Fallback) -> LookupTableModel {
    build_lookup_from_pairs(
        training
            .traces
            .iter()
            .flat_map(|t| t.packets.iter().map(move |p| (p.payload_length, t.label.action))),
        control,
        fallback,
    )
}

impl LookupTableModel {
    /// The ground-truth class of a packet under this table: control lengths
    /// are `Control` regardless of the trace they came from.
    pub fn truth(&self, length: u32, action: Action) -> Action {
        if self.control_lengths.contains(&length) {
            Action::Control
        } else {
            action
        }
    }

    pub fn classify(&self, length: u32) -> Action {
        if self.control_lengths.contains(&length) {
            return Action::Control;
        }
        if let Some(classes) = self.table.get(&length) {
            return most_frequent(classes);
        }
        match self.fallback {
            Fallback::ControlClass => Action::Control,
            Fallback::NearestLength => {
                let below = self.table.range(..length).next_back();
                let above = self.table.range(length..).next();
                let nearest = match (below, above) {
                    (Some(b), Some(a)) => {
                        if length - b.0 <= a.0 - length {
                            b
                        } else {
                            a
                        }
                    }
                    (Some(b), None) => b,
                    (None, Some(a)) => a,
                    (None, None) => return Action::Control,
                };
                most_frequent(nearest.1)
            }
        }
    }
}

/// Highest count wins; equal counts go to the earlier action.
fn most_frequent(classes: &BTreeMap<Action, u64>) -> Action {
    let mut best: Option<(Action, u64)> = None;
    for (&a, &n) in classes {
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((a, n));
        }
    }
    best.map(|(a, _)| a).unwrap_or(Action::Control)
}

/// Shorthand for [`LookupTableModel::classify`].
pub fn classify_length(model: &LookupTableModel, payload_length: u32) -> Action {
    model.classify(payload_length)
}
