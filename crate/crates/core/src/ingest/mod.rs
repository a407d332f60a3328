//! Turning packet captures and dataset files into [`Dataset`](crate::Dataset)s.

mod canonical;
mod pcap;

pub use canonical::{
    from_canonical_str, read_dataset, read_from, to_canonical_string, write_dataset, write_to,
    DatasetIoError,
};
pub use pcap::{parse_pcap, CaptureConfig, CaptureError, LinkType, ParsedCapture, SkipCounts};

use std::collections::BTreeMap;

use crate::trace::{preprocess, Dataset, Label, LabeledTrace, Metadata};

/// Groups parsed records by transport stream and labels every stream with
/// `label`, producing one preprocessed trace per stream in order of first
/// appearance. Streams that preprocessing empties are dropped.
pub fn capture_to_dataset(capture: &ParsedCapture, label: &Label, source: &str) -> Dataset {
    let mut order: Vec<&str> = Vec::new();
    let mut streams: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for record in &capture.records {
        let entry = streams.entry(record.stream_id.as_str()).or_insert_with(|| {
            order.push(record.stream_id.as_str());
            Vec::new()
        });
        entry.push(record.clone());
    }
    let traces = order
        .into_iter()
        .filter_map(|id| {
            let trace = LabeledTrace::new(label.clone(), streams.remove(id).unwrap_or_default());
            preprocess(&trace).ok()
        })
        .collect();
    let mut metadata = Metadata::new(source);
    metadata.extra.insert(
        "skipped".into(),
        serde_json::to_value(capture.skipped).expect("counters serialize"),
    );
    Dataset::new(metadata, traces)
}
