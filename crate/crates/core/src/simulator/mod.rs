//! Labeled synthetic traces built from deterministic size models.

mod builtin;
mod language;
mod size_model;

pub use builtin::{builtin_model, builtin_models};
pub use language::{builtin_language_profiles, encoded_length, Charset, LanguageProfile, SentenceLength};
pub use size_model::{payload_length, ActionShape, Channel, SizeModel};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, StreamRng};
use crate::trace::{Action, Dataset, Direction, Label, LabeledTrace, Language, Metadata, Os, PacketRecord, Service};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("model {model}: payload {payload} exceeds max_payload {max}")]
    Overflow { model: String, payload: u64, max: u32 },
    #[error("model {model} has no shape for {direction} {action}")]
    NoShape {
        model: String,
        direction: Direction,
        action: Action,
    },
    #[error("invalid size model {model}: {reason}")]
    InvalidModel { model: String, reason: String },
    #[error("invalid {language} profile: {reason}")]
    InvalidProfile { language: Language, reason: String },
    #[error("no shipped {channel:?} model for {service}/{os}")]
    UnknownModel { service: Service, os: Os, channel: Channel },
    #[error("no language profile for {0}")]
    MissingProfile(Language),
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
}

/// Affine map from image dimensions to attachment bytes:
/// `bytes_per_pixel * side^2 + header_bytes + U[0, jitter_bytes)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttachmentMap {
    /// Square image sides, one chosen uniformly per image.
    pub sides: Vec<u32>,
    pub bytes_per_pixel: f64,
    pub header_bytes: u64,
    pub jitter_bytes: u64,
}

impl Default for AttachmentMap {
    fn default() -> Self {
        AttachmentMap {
            sides: vec![64, 128, 256],
            bytes_per_pixel: 3.0,
            header_bytes: 1200,
            jitter_bytes: 4096,
        }
    }
}

impl AttachmentMap {
    fn sample(&self, rng: &mut StreamRng) -> u64 {
        let side = u64::from(self.sides[rng.random_range(0..self.sides.len())]);
        let jitter = if self.jitter_bytes > 0 {
            rng.random_range(0..self.jitter_bytes)
        } else {
            0
        };
        (self.bytes_per_pixel * (side * side) as f64).round() as u64 + self.header_bytes + jitter
    }
}

fn uniform<K: Ord + Copy>(keys: &[K]) -> BTreeMap<K, f64> {
    keys.iter().map(|&k| (k, 1.0 / keys.len() as f64)).collect()
}

fn default_actions() -> BTreeMap<Action, f64> {
    uniform(&Action::USER)
}

fn default_languages() -> BTreeMap<Language, f64> {
    uniform(&Language::ALL)
}

fn default_samples() -> u32 {
    250
}

fn default_max_controls() -> u32 {
    3
}

fn default_os() -> Os {
    Os::Unknown
}

/// One generation scenario. Every field except `service` has a default, so a
/// JSON document can be as small as `{"service":"imessage","os":"ios"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub service: Service,
    #[serde(default = "default_os")]
    pub os: Os,
    #[serde(default)]
    pub channel: Channel,
    #[serde(default = "default_actions")]
    pub action_mix: BTreeMap<Action, f64>,
    #[serde(default = "default_languages")]
    pub language_mix: BTreeMap<Language, f64>,
    /// Traces per (action, direction) class under a uniform action mix.
    #[serde(default = "default_samples")]
    pub samples_per_class: u32,
    /// Overrides the model's control lengths when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_packet_lengths: Option<Vec<u32>>,
    /// Each trace carries a uniform 0..=max_control_packets control packets.
    #[serde(default = "default_max_controls")]
    pub max_control_packets: u32,
    #[serde(default)]
    pub attachment: AttachmentMap,
    #[serde(default)]
    pub seed: u64,
    /// Replaces the shipped model for (service, os, channel).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_model: Option<SizeModel>,
    /// Replaces the shipped language profiles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language_profiles: Option<Vec<LanguageProfile>>,
}

impl ScenarioConfig {
    pub fn new(service: Service, os: Os) -> Self {
        ScenarioConfig {
            service,
            os,
            channel: Channel::Message,
            action_mix: default_actions(),
            language_mix: default_languages(),
            samples_per_class: default_samples(),
            control_packet_lengths: None,
            max_control_packets: default_max_controls(),
            attachment: AttachmentMap::default(),
            seed: 0,
            size_model: None,
            language_profiles: None,
        }
    }

    /// Text messages only, `per_language` traces per (language, direction).
    pub fn text_only(service: Service, os: Os, per_language: u32) -> Self {
        ScenarioConfig {
            action_mix: BTreeMap::from([(Action::Text, 1.0)]),
            samples_per_class: per_language * Language::ALL.len() as u32,
            ..ScenarioConfig::new(service, os)
        }
    }

    /// Attachment uploads and downloads, `samples` per direction.
    pub fn attachments(samples: u32) -> Self {
        ScenarioConfig {
            channel: Channel::Attachment,
            action_mix: BTreeMap::from([(Action::Image, 1.0)]),
            samples_per_class: samples,
            max_control_packets: 0,
            ..ScenarioConfig::new(Service::IMessage, Os::Unknown)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn resolved_model(&self) -> Result<SizeModel, SimError> {
        match &self.size_model {
            Some(m) => Ok(m.clone()),
            None => builtin_model(self.service, self.os, self.channel).ok_or(SimError::UnknownModel {
                service: self.service,
                os: self.os,
                channel: self.channel,
            }),
        }
    }

    fn profiles(&self) -> Vec<LanguageProfile> {
        self.language_profiles
            .clone()
            .unwrap_or_else(builtin_language_profiles)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |s: String| Err(SimError::InvalidConfig(s));
        check_mix("action_mix", &self.action_mix)?;
        if self.action_mix.get(&Action::Control).is_some_and(|&p| p > 0.0) {
            return bad("control is not a user action".into());
        }
        if self.samples_per_class == 0 {
            return bad("samples_per_class must be at least 1".into());
        }
        let model = self.resolved_model()?;
        model.validate()?;
        if model.service != self.service || model.os != self.os {
            return bad(format!("model {} does not belong to {}/{}", model.name, self.service, self.os));
        }
        for (&action, &p) in &self.action_mix {
            if p > 0.0 {
                for d in Direction::ALL {
                    model.shape(d, action).ok_or_else(|| SimError::NoShape {
                        model: model.name.clone(),
                        direction: d,
                        action,
                    })?;
                }
            }
        }
        if self.action_mix.get(&Action::Text).is_some_and(|&p| p > 0.0) {
            if model.channel == Channel::Attachment {
                return bad("the attachment channel carries no text".into());
            }
            check_mix("language_mix", &self.language_mix)?;
            if self.language_mix.get(&Language::None).is_some_and(|&p| p > 0.0) {
                return bad("language_mix cannot include none".into());
            }
            let profiles = self.profiles();
            for p in &profiles {
                p.validate()?;
            }
            for (&lang, &p) in &self.language_mix {
                if p > 0.0 && !profiles.iter().any(|q| q.language == lang) {
                    return Err(SimError::MissingProfile(lang));
                }
            }
        }
        if self.max_control_packets > 0 && self.control_lengths(&model).is_empty() {
            return bad("control packets requested but no control lengths configured".into());
        }
        if self.attachment.sides.is_empty() || !(self.attachment.bytes_per_pixel >= 0.0) {
            return bad("attachment map needs at least one side and a non-negative scale".into());
        }
        Ok(())
    }

    fn control_lengths(&self, model: &SizeModel) -> Vec<u32> {
        self.control_packet_lengths
            .clone()
            .unwrap_or_else(|| model.control_lengths.clone())
    }
}

fn check_mix<K: std::fmt::Debug>(name: &str, mix: &BTreeMap<K, f64>) -> Result<(), SimError> {
    if mix.values().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(SimError::InvalidConfig(format!("{name} probabilities must lie in [0, 1]")));
    }
    let total: f64 = mix.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(SimError::InvalidConfig(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

/// Splits `n` items across `mix` by largest remainder; ties go to the earlier key.
fn allocate<K: Ord + Copy>(n: u32, mix: &BTreeMap<K, f64>) -> Vec<(K, u32)> {
    let mut parts: Vec<(K, u32, f64)> = mix
        .iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|(&k, &p)| {
            let exact = f64::from(n) * p;
            (k, exact.floor() as u32, exact - exact.floor())
        })
        .collect();
    let assigned: u32 = parts.iter().map(|p| p.1).sum();
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.sort_by(|&a, &b| parts[b].2.total_cmp(&parts[a].2).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned) as usize) {
        parts[i].1 += 1;
    }
    parts.into_iter().map(|(k, c, _)| (k, c)).collect()
}

/// Generates one scenario from its own seed.
pub fn generate(config: &ScenarioConfig) -> Result<Dataset, SimError> {
    let traces = generate_traces(config, config.seed, 0)?;
    Ok(Dataset::new(metadata(config.seed, std::slice::from_ref(config)), traces))
}

/// Generates several scenarios into one dataset. Scenario `i` draws from the
/// stream `(seed, i)`, so each scenario's traces do not depend on the others.
pub fn generate_suite(configs: &[ScenarioConfig], seed: u64) -> Result<Dataset, SimError> {
    let mut traces = Vec::new();
    for (i, config) in configs.iter().enumerate() {
        traces.extend(generate_traces(config, seed, i as u64)?);
    }
    Ok(Dataset::new(metadata(seed, configs), traces))
}

fn metadata(seed: u64, configs: &[ScenarioConfig]) -> Metadata {
    let mut meta = Metadata::new("simulator");
    meta.seed = Some(seed);
    let names: Vec<String> = configs
        .iter()
        .map(|c| c.resolved_model().map(|m| m.name).unwrap_or_default())
        .collect();
    meta.extra.insert("models".into(), serde_json::json!(names));
    meta
}

fn generate_traces(config: &ScenarioConfig, seed: u64, scenario: u64) -> Result<Vec<LabeledTrace>, SimError> {
    config.validate()?;
    let model = config.resolved_model()?;
    let profiles = config.profiles();
    let controls = config.control_lengths(&model);
    let mut rng = rng::stream(seed, &[scenario]);
    let support = config.action_mix.values().filter(|&&p| p > 0.0).count() as f64;
    let mut traces = Vec::new();
    let mut clock = 0.0_f64;

    for action in Action::USER {
        let p = config.action_mix.get(&action).copied().unwrap_or(0.0);
        if p <= 0.0 {
            continue;
        }
        let per_direction = (f64::from(config.samples_per_class) * support * p).round() as u32;
        for direction in Direction::ALL {
            let mut languages: Vec<Language> = if action == Action::Text {
                allocate(per_direction, &config.language_mix)
                    .into_iter()
                    .flat_map(|(l, c)| std::iter::repeat_n(l, c as usize))
                    .collect()
            } else {
                vec![Language::None; per_direction as usize]
            };
            languages.shuffle(&mut rng);
            for language in languages {
                let stream_id = format!("s{scenario}-{}", traces.len());
                let trace = one_trace(config, &model, &profiles, &controls, action, direction, language, &stream_id, &mut clock, &mut rng)?;
                traces.push(trace);
            }
        }
    }
    Ok(traces)
}

#[allow(clippy::too_many_arguments)]
fn one_trace(
    config: &ScenarioConfig,
    model: &SizeModel,
    profiles: &[LanguageProfile],
    controls: &[u32],
    action: Action,
    direction: Direction,
    language: Language,
    stream_id: &str,
    clock: &mut f64,
    rng: &mut StreamRng,
) -> Result<LabeledTrace, SimError> {
    let (label, encoded) = match action {
        Action::Text => {
            let profile = profiles
                .iter()
                .find(|p| p.language == language)
                .ok_or(SimError::MissingProfile(language))?;
            let chars = profile.sentence_length.sample(rng);
            let encoded = encoded_length(chars, profile, rng);
            (Label::text(config.service, config.os, language, chars), encoded)
        }
        Action::Image => {
            let bytes = config.attachment.sample(rng);
            let encoded = if model.channel == Channel::Attachment { bytes } else { 0 };
            (Label::image(config.service, config.os, bytes), encoded)
        }
        _ => (Label::action(config.service, config.os, action), 0),
    };
    let content = payload_length(model, direction, action, encoded)?;
    let shape = model.shape(direction, action).expect("validated");
    let mut lengths = vec![content; shape.packets as usize];
    if config.max_control_packets > 0 {
        let k = rng.random_range(0..=config.max_control_packets);
        for _ in 0..k {
            lengths.push(controls[rng.random_range(0..controls.len())]);
        }
    }
    lengths.shuffle(rng);
    *clock += 1.0;
    let packets = lengths
        .into_iter()
        .map(|len| {
            *clock += rng.random_range(0.001..0.05);
            let t = (*clock * 1e6).round() / 1e6;
            PacketRecord::new(t, direction, len, stream_id)
        })
        .collect();
    Ok(LabeledTrace::new(label, packets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::to_canonical_string;
    use crate::trace::validate;
    use std::collections::{BTreeSet, HashMap};

    fn imessage(os: Os, spc: u32) -> ScenarioConfig {
        ScenarioConfig {
            samples_per_class: spc,
            ..ScenarioConfig::new(Service::IMessage, os)
        }
        .with_seed(7)
    }

    #[test]
    fn default_counts_match_class_arithmetic() {
        let ds = generate(&imessage(Os::Ios, 250)).unwrap();
        assert_eq!(ds.traces.len(), 250 * 5 * 2);
        let mut per_class: HashMap<(Action, Direction), usize> = HashMap::new();
        for t in &ds.traces {
            *per_class.entry((t.label.action, t.direction().unwrap())).or_default() += 1;
        }
        assert_eq!(per_class.len(), 10);
        assert!(per_class.values().all(|&c| c == 250));
        assert!(validate(&ds).is_valid());
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = to_canonical_string(&generate(&imessage(Os::Osx, 40)).unwrap());
        let b = to_canonical_string(&generate(&imessage(Os::Osx, 40)).unwrap());
        assert_eq!(a, b);
        let c = to_canonical_string(&generate(&imessage(Os::Osx, 40).with_seed(8)).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn text_only_english_labels() {
        let mut config = ScenarioConfig::text_only(Service::IMessage, Os::Ios, 10);
        config.language_mix = BTreeMap::from([(Language::English, 1.0)]);
        let ds = generate(&config).unwrap();
        assert_eq!(ds.traces.len(), 120);
        for t in &ds.traces {
            assert_eq!(t.label.action, Action::Text);
            assert_eq!(t.label.language, Language::English);
        }
    }

    #[test]
    fn languages_split_evenly() {
        let ds = generate(&ScenarioConfig::text_only(Service::WhatsApp, Os::Unknown, 7)).unwrap();
        let mut counts: HashMap<(Language, Direction), usize> = HashMap::new();
        for t in &ds.traces {
            *counts.entry((t.label.language, t.direction().unwrap())).or_default() += 1;
        }
        assert_eq!(counts.len(), 12);
        assert!(counts.values().all(|&c| c == 7));
    }

    fn support(ds: &Dataset) -> HashMap<Action, BTreeSet<(u32, Direction)>> {
        let mut out: HashMap<Action, BTreeSet<(u32, Direction)>> = HashMap::new();
        for t in &ds.traces {
            for p in &t.packets {
                out.entry(t.label.action)
                    .or_default()
                    .insert((p.payload_length, p.direction));
            }
        }
        out
    }

    #[test]
    fn ios_and_osx_supports_are_disjoint() {
        let ios = support(&generate(&imessage(Os::Ios, 250)).unwrap());
        let osx = support(&generate(&imessage(Os::Osx, 250)).unwrap());
        let all_ios: BTreeSet<_> = ios.values().flatten().collect();
        let all_osx: BTreeSet<_> = osx.values().flatten().collect();
        assert!(all_ios.is_disjoint(&all_osx));
        for a in Action::USER {
            assert!(ios[&a].is_disjoint(&osx[&a]), "{a}");
        }
    }

    #[test]
    fn action_lengths_are_distinct_except_ios_read_start() {
        for os in [Os::Ios, Os::Osx] {
            let config = imessage(os, 250);
            let model = config.resolved_model().unwrap();
            let ds = generate(&config).unwrap();
            for direction in Direction::ALL {
                let mut by_action: HashMap<Action, BTreeSet<u32>> = HashMap::new();
                for t in ds.traces.iter().filter(|t| t.direction() == Some(direction)) {
                    for p in &t.packets {
                        if !model.control_lengths.contains(&p.payload_length) {
                            by_action.entry(t.label.action).or_default().insert(p.payload_length);
                        }
                    }
                }
                for a in Action::USER {
                    for b in Action::USER {
                        if a >= b {
                            continue;
                        }
                        let shared = !by_action[&a].is_disjoint(&by_action[&b]);
                        let allowed = os == Os::Ios
                            && direction == Direction::ToService
                            && (a, b) == (Action::Start, Action::Read);
                        assert_eq!(shared, allowed, "{os} {direction} {a}/{b}");
                    }
                }
            }
        }
    }

    #[test]
    fn attachment_scenario_is_image_only_and_valid() {
        let ds = generate(&ScenarioConfig::attachments(30).with_seed(3)).unwrap();
        assert_eq!(ds.traces.len(), 60);
        for t in &ds.traces {
            assert_eq!(t.packets.len(), 1);
            let bytes = t.label.attachment_bytes.unwrap();
            assert!(u64::from(t.packets[0].payload_length) >= bytes);
        }
        assert!(validate(&ds).is_valid());
    }

    #[test]
    fn builtin_models_keep_their_invariants() {
        let models = builtin_models();
        assert_eq!(models.len(), 6);
        for m in &models {
            m.validate().unwrap();
        }
        let get = |n: &str| models.iter().find(|m| m.name == n).unwrap();
        assert_eq!(get("imessage-ios").block_size, 16);
        assert_eq!(get("imessage-osx").block_size, 16);
        assert_eq!(get("telegram").block_size, 16);
        assert_eq!(get("whatsapp").block_size, 1);
        assert_eq!(get("viber").block_size, 1);
        assert!(get("imessage-ios").compression_factor < get("imessage-osx").compression_factor);
        assert_eq!(get("imessage-osx").direction_delta, 112);
        assert_eq!(get("imessage-ios").direction_delta, 64);
    }

    #[test]
    fn suite_scenarios_are_independent() {
        let a = imessage(Os::Ios, 20);
        let b = imessage(Os::Osx, 20);
        let both = generate_suite(&[a.clone(), b.clone()], 11).unwrap();
        let only_a = generate_suite(&[a], 11).unwrap();
        assert_eq!(&both.traces[..only_a.traces.len()], &only_a.traces[..]);
    }

    #[test]
    fn config_json_defaults() {
        let c: ScenarioConfig = serde_json::from_str(r#"{"service":"imessage","os":"ios"}"#).unwrap();
        assert_eq!(c, ScenarioConfig::new(Service::IMessage, Os::Ios));
        let bad: ScenarioConfig =
            serde_json::from_str(r#"{"service":"imessage","os":"ios","action_mix":{"text":0.5}}"#).unwrap();
        assert!(matches!(generate(&bad), Err(SimError::InvalidConfig(_))));
    }

    #[test]
    fn allocation_is_exact() {
        let mix = BTreeMap::from([(0, 1.0 / 3.0), (1, 1.0 / 3.0), (2, 1.0 / 3.0)]);
        assert_eq!(allocate(10, &mix), vec![(0, 4), (1, 3), (2, 3)]);
    }
}
