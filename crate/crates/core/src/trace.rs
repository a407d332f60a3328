//! Domain types shared by every stage, plus trace preprocessing and validation.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version of the canonical dataset file format.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("trace has no packets left after preprocessing")]
    EmptyTrace,
}

/// Which way a packet travels relative to the messaging provider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "to")]
    ToService,
    #[serde(rename = "from")]
    FromService,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::ToService, Direction::FromService];

    pub fn flipped(self) -> Direction {
        match self {
            Direction::ToService => Direction::FromService,
            Direction::FromService => Direction::ToService,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::ToService => "to",
            Direction::FromService => "from",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Service {
    #[serde(rename = "imessage")]
    IMessage,
    WhatsApp,
    Viber,
    Telegram,
}

impl Service {
    pub const ALL: [Service; 4] = [
        Service::IMessage,
        Service::WhatsApp,
        Service::Viber,
        Service::Telegram,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Service::IMessage => "imessage",
            Service::WhatsApp => "whatsapp",
            Service::Viber => "viber",
            Service::Telegram => "telegram",
        }
    }
}

impl fmt::Display for Service {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Operating system of the observed device. Services other than iMessage are
/// not split by OS and use `Unknown`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Os {
    Ios,
    Osx,
    Unknown,
}

impl Os {
    pub fn as_str(self) -> &'static str {
        match self {
            Os::Ios => "ios",
            Os::Osx => "osx",
            Os::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Os {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Observable user action. `Control` labels protocol packets whose sizes show
/// up under several actions.
///
/// The declaration order is the fixed class order used to break ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Start,
    Stop,
    Text,
    Image,
    Read,
    Control,
}

impl Action {
    /// The five actions a user can trigger.
    pub const USER: [Action; 5] = [
        Action::Start,
        Action::Stop,
        Action::Text,
        Action::Image,
        Action::Read,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Start => "start",
            Action::Stop => "stop",
            Action::Text => "text",
            Action::Image => "image",
            Action::Read => "read",
            Action::Control => "control",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Chinese,
    English,
    French,
    German,
    Russian,
    Spanish,
    None,
}

impl Language {
    /// Every real language, without `None`.
    pub const ALL: [Language; 6] = [
        Language::Chinese,
        Language::English,
        Language::French,
        Language::German,
        Language::Russian,
        Language::Spanish,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::Chinese => "chinese",
            Language::English => "english",
            Language::French => "french",
            Language::German => "german",
            Language::Russian => "russian",
            Language::Spanish => "spanish",
            Language::None => "none",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One observed application payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    /// Seconds; non-decreasing within a trace.
    #[serde(rename = "t")]
    pub timestamp: f64,
    #[serde(rename = "dir")]
    pub direction: Direction,
    /// Transport payload bytes.
    #[serde(rename = "len")]
    pub payload_length: u32,
    #[serde(rename = "stream")]
    pub stream_id: String,
    /// Transport sequence number, used only to drop retransmissions.
    #[serde(rename = "seq", default, skip_serializing_if = "Option::is_none")]
    pub seq_hint: Option<u32>,
}

impl PacketRecord {
    pub fn new(timestamp: f64, direction: Direction, payload_length: u32, stream_id: impl Into<String>) -> Self {
        PacketRecord {
            timestamp,
            direction,
            payload_length,
            stream_id: stream_id.into(),
            seq_hint: None,
        }
    }

    pub fn with_seq(mut self, seq: u32) -> Self {
        self.seq_hint = Some(seq);
        self
    }
}

/// Ground truth attached to a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub service: Service,
    pub os: Os,
    pub action: Action,
    pub language: Language,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plaintext_chars: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attachment_bytes: Option<u64>,
}

impl Label {
    /// Label for an action that carries no content.
    pub fn action(service: Service, os: Os, action: Action) -> Self {
        Label {
            service,
            os,
            action,
            language: Language::None,
            plaintext_chars: None,
            attachment_bytes: None,
        }
    }

    pub fn text(service: Service, os: Os, language: Language, chars: u32) -> Self {
        Label {
            language,
            plaintext_chars: Some(chars),
            ..Label::action(service, os, Action::Text)
        }
    }

    pub fn image(service: Service, os: Os, attachment_bytes: u64) -> Self {
        Label {
            attachment_bytes: Some(attachment_bytes),
            ..Label::action(service, os, Action::Image)
        }
    }

    /// Violations of the label invariants, in a fixed order.
    pub fn violations(&self) -> Vec<ViolationKind> {
        let mut out = Vec::new();
        let is_text = self.action == Action::Text;
        if is_text != (self.language != Language::None) {
            out.push(ViolationKind::LanguageInvariant);
        }
        if is_text != self.plaintext_chars.is_some() {
            out.push(ViolationKind::PlaintextCharsInvariant);
        }
        if (self.action == Action::Image) != self.attachment_bytes.is_some() {
            out.push(ViolationKind::AttachmentBytesInvariant);
        }
        out
    }
}

/// A packet sequence with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTrace {
    pub label: Label,
    pub packets: Vec<PacketRecord>,
}

impl LabeledTrace {
    pub fn new(label: Label, packets: Vec<PacketRecord>) -> Self {
        LabeledTrace { label, packets }
    }

    /// The largest packet of the trace. Content-bearing packets (message text,
    /// attachment data) are always larger than the control chatter around
    /// them.
    pub fn content_packet(&self) -> Option<&PacketRecord> {
        self.packets.iter().max_by_key(|p| p.payload_length)
    }

    /// Direction of the trace's packets, when they all agree.
    pub fn direction(&self) -> Option<Direction> {
        let first = self.packets.first()?.direction;
        self.packets
            .iter()
            .all(|p| p.direction == first)
            .then_some(first)
    }
}

/// Provenance record stored in the dataset header.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    /// Generator name or capture file.
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Metadata {
    pub fn new(source: impl Into<String>) -> Self {
        Metadata {
            source: source.into(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub format_version: u32,
    pub metadata: Metadata,
    pub traces: Vec<LabeledTrace>,
}

impl Dataset {
    pub fn new(metadata: Metadata, traces: Vec<LabeledTrace>) -> Self {
        Dataset {
            format_version: FORMAT_VERSION,
            metadata,
            traces,
        }
    }

    pub fn packets(&self) -> impl Iterator<Item = &PacketRecord> {
        self.traces.iter().flat_map(|t| t.packets.iter())
    }

    pub fn packet_count(&self) -> usize {
        self.traces.iter().map(|t| t.packets.len()).sum()
    }

    pub fn max_payload(&self) -> Option<u32> {
        self.packets().map(|p| p.payload_length).max()
    }

    /// Traces whose label satisfies `keep`, cloned into a new dataset with the
    /// same metadata.
    pub fn filter(&self, mut keep: impl FnMut(&LabeledTrace) -> bool) -> Dataset {
        Dataset {
            format_version: self.format_version,
            metadata: self.metadata.clone(),
            traces: self.traces.iter().filter(|t| keep(t)).cloned().collect(),
        }
    }

    /// Concatenates datasets. The metadata of the first one is kept and the
    /// sources of the rest are appended to it.
    pub fn merge(parts: Vec<Dataset>) -> Dataset {
        let mut iter = parts.into_iter();
        let Some(mut out) = iter.next() else {
            return Dataset::new(Metadata::default(), Vec::new());
        };
        for part in iter {
            if !part.metadata.source.is_empty() && part.metadata.source != out.metadata.source {
                out.metadata.source = format!("{}+{}", out.metadata.source, part.metadata.source);
            }
            out.traces.extend(part.traces);
        }
        out
    }
}

/// Removes zero-payload packets and TCP retransmissions.
///
/// A retransmission is a packet whose `(stream_id, seq_hint, payload_length)`
/// was already seen earlier in the trace; packets without a sequence number are
/// never treated as duplicates. Surviving packets keep their order and fields.
pub fn preprocess(trace: &LabeledTrace) -> Result<LabeledTrace, TraceError> {
    let mut seen: HashSet<(&str, u32, u32)> = HashSet::new();
    let packets: Vec<PacketRecord> = trace
        .packets
        .iter()
        .filter(|p| p.payload_length > 0)
        .filter(|p| match p.seq_hint {
            Some(seq) => seen.insert((p.stream_id.as_str(), seq, p.payload_length)),
            None => true,
        })
        .cloned()
        .collect();
    if packets.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    Ok(LabeledTrace {
        label: trace.label.clone(),
        packets,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    FormatVersion { found: u32 },
    EmptyTrace,
    ZeroPayload,
    InvalidTimestamp,
    DecreasingTimestamp,
    MixedStreams,
    LanguageInvariant,
    PlaintextCharsInvariant,
    AttachmentBytesInvariant,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::FormatVersion { found } => {
                write!(f, "format version {found}, expected {FORMAT_VERSION}")
            }
            ViolationKind::EmptyTrace => f.write_str("trace has no packets"),
            ViolationKind::ZeroPayload => f.write_str("packet has zero payload length"),
            ViolationKind::InvalidTimestamp => f.write_str("timestamp is negative or not finite"),
            ViolationKind::DecreasingTimestamp => f.write_str("timestamp decreases"),
            ViolationKind::MixedStreams => f.write_str("trace spans more than one stream"),
            ViolationKind::LanguageInvariant => {
                f.write_str("language must be set exactly when the action is text")
            }
            ViolationKind::PlaintextCharsInvariant => {
                f.write_str("plaintext_chars must be set exactly when the action is text")
            }
            ViolationKind::AttachmentBytesInvariant => {
                f.write_str("attachment_bytes must be set exactly when the action is image")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// `None` for dataset-level problems.
    pub trace: Option<usize>,
    pub packet: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.trace, self.packet) {
            (Some(t), Some(p)) => write!(f, "trace {t} packet {p}: {}", self.kind),
            (Some(t), None) => write!(f, "trace {t}: {}", self.kind),
            _ => write!(f, "dataset: {}", self.kind),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every label and packet invariant. Violations are reported, not
/// raised.
pub fn validate(dataset: &Dataset) -> ValidationReport {
    let mut violations = Vec::new();
    if dataset.format_version != FORMAT_VERSION {
        violations.push(Violation {
            trace: None,
            packet: None,
            kind: ViolationKind::FormatVersion {
                found: dataset.format_version,
            },
        });
    }
    for (ti, trace) in dataset.traces.iter().enumerate() {
        let mut push = |packet: Option<usize>, kind: ViolationKind| {
            violations.push(Violation {
                trace: Some(ti),
                packet,
                kind,
            })
        };
        for kind in trace.label.violations() {
            push(None, kind);
        }
        if trace.packets.is_empty() {
            push(None, ViolationKind::EmptyTrace);
            continue;
        }
        let stream = &trace.packets[0].stream_id;
        if trace.packets.iter().any(|p| &p.stream_id != stream) {
            push(None, ViolationKind::MixedStreams);
        }
        let mut last = f64::NEG_INFINITY;
        for (pi, p) in trace.packets.iter().enumerate() {
            if p.payload_length == 0 {
                push(Some(pi), ViolationKind::ZeroPayload);
            }
            if !p.timestamp.is_finite() || p.timestamp < 0.0 {
                push(Some(pi), ViolationKind::InvalidTimestamp);
                continue;
            }
            if p.timestamp < last {
                push(Some(pi), ViolationKind::DecreasingTimestamp);
            }
            last = p.timestamp;
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pkt(len: u32) -> PacketRecord {
        PacketRecord::new(0.0, Direction::ToService, len, "s0")
    }

    fn text_trace(packets: Vec<PacketRecord>) -> LabeledTrace {
        LabeledTrace::new(
            Label::text(Service::IMessage, Os::Ios, Language::English, 12),
            packets,
        )
    }

    #[test]
    fn preprocess_drops_empty_payloads_and_retransmissions() {
        let trace = text_trace(vec![
            pkt(0),
            pkt(120),
            pkt(120).with_seq(5),
            pkt(120).with_seq(5),
        ]);
        let out = preprocess(&trace).unwrap();
        assert_eq!(out.packets, vec![pkt(120), pkt(120).with_seq(5)]);
        assert_eq!(out.label, trace.label);
    }

    #[test]
    fn preprocess_keeps_distinct_packets() {
        let trace = text_trace(vec![pkt(100).with_seq(1), pkt(200).with_seq(2)]);
        assert_eq!(preprocess(&trace).unwrap(), trace);
    }

    #[test]
    fn preprocess_same_seq_different_stream_is_kept() {
        let mut other = pkt(100).with_seq(1);
        other.stream_id = "s1".into();
        let trace = text_trace(vec![pkt(100).with_seq(1), other]);
        assert_eq!(preprocess(&trace).unwrap().packets.len(), 2);
    }

    #[test]
    fn preprocess_all_zero_is_empty_trace() {
        let trace = text_trace(vec![pkt(0), pkt(0)]);
        assert_eq!(preprocess(&trace), Err(TraceError::EmptyTrace));
    }

    #[test]
    fn validate_accepts_valid_text_trace() {
        let ds = Dataset::new(Metadata::new("test"), vec![text_trace(vec![pkt(150)])]);
        assert!(validate(&ds).is_valid());
    }

    #[test]
    fn validate_flags_text_without_language() {
        let mut trace = text_trace(vec![pkt(150)]);
        trace.label.language = Language::None;
        let report = validate(&Dataset::new(Metadata::new("test"), vec![trace]));
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ViolationKind::LanguageInvariant);
    }

    #[test]
    fn validate_flags_decreasing_timestamps() {
        let mut a = pkt(100);
        a.timestamp = 2.0;
        let mut b = pkt(110);
        b.timestamp = 1.0;
        let report = validate(&Dataset::new(Metadata::new("test"), vec![text_trace(vec![a, b])]));
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ViolationKind::DecreasingTimestamp);
        assert_eq!(report.violations[0].packet, Some(1));
    }

    #[test]
    fn validate_flags_other_label_invariants() {
        let mut image = LabeledTrace::new(
            Label::action(Service::IMessage, Os::Osx, Action::Image),
            vec![pkt(900)],
        );
        let stop = LabeledTrace::new(
            Label {
                plaintext_chars: Some(3),
                ..Label::action(Service::IMessage, Os::Osx, Action::Stop)
            },
            vec![pkt(90)],
        );
        let ds = Dataset::new(Metadata::new("test"), vec![image.clone(), stop]);
        let kinds: Vec<_> = validate(&ds).violations.into_iter().map(|v| v.kind).collect();
        assert_eq!(
            kinds,
            vec![
                ViolationKind::AttachmentBytesInvariant,
                ViolationKind::PlaintextCharsInvariant
            ]
        );
        image.label.attachment_bytes = Some(4096);
        assert!(validate(&Dataset::new(Metadata::new("test"), vec![image])).is_valid());
    }

    #[test]
    fn validate_flags_format_version_and_empty_trace() {
        let mut ds = Dataset::new(Metadata::new("test"), vec![text_trace(vec![])]);
        ds.format_version = 2;
        let kinds: Vec<_> = validate(&ds).violations.into_iter().map(|v| v.kind).collect();
        assert_eq!(
            kinds,
            vec![ViolationKind::FormatVersion { found: 2 }, ViolationKind::EmptyTrace]
        );
    }

    fn arb_trace() -> impl Strategy<Value = LabeledTrace> {
        prop::collection::vec((0u32..4, 0u32..3, prop::option::of(0u32..3)), 1..20).prop_map(
            |raw| {
                let packets = raw
                    .into_iter()
                    .map(|(len, stream, seq)| PacketRecord {
                        timestamp: 0.0,
                        direction: Direction::ToService,
                        payload_length: len * 50,
                        stream_id: format!("s{stream}"),
                        seq_hint: seq,
                    })
                    .collect();
                text_trace(packets)
            },
        )
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent_and_only_removes(trace in arb_trace()) {
            if let Ok(once) = preprocess(&trace) {
                prop_assert_eq!(&preprocess(&once).unwrap(), &once);
                prop_assert!(once.packets.len() <= trace.packets.len());
                // surviving packets form a subsequence of the input
                let mut it = trace.packets.iter();
                for p in &once.packets {
                    prop_assert!(it.any(|q| q == p));
                }
            } else {
                prop_assert!(trace.packets.iter().all(|p| p.payload_length == 0));
            }
        }
    }
}
