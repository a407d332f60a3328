//! `(length, direction)` vocabularies, feature vectors and instance sampling.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{Dataset, Direction, PacketRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("cannot sample from an empty pool")]
    EmptyPool,
    #[error("instances need at least one packet")]
    ZeroSize,
}

/// The observable of one packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureKey {
    #[serde(rename = "len")]
    pub length: u32,
    #[serde(rename = "dir")]
    pub direction: Direction,
}

impl FeatureKey {
    pub fn new(length: u32, direction: Direction) -> Self {
        FeatureKey { length, direction }
    }
}

impl From<&PacketRecord> for FeatureKey {
    fn from(p: &PacketRecord) -> Self {
        FeatureKey::new(p.payload_length, p.direction)
    }
}

/// Sorted distinct keys plus one trailing out-of-vocabulary slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "Vec<FeatureKey>", into = "Vec<FeatureKey>")]
pub struct Vocabulary {
    keys: Vec<FeatureKey>,
    index: HashMap<FeatureKey, usize>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.keys == other.keys
    }
}

impl From<Vec<FeatureKey>> for Vocabulary {
    fn from(keys: Vec<FeatureKey>) -> Self {
        Vocabulary::from_keys(keys)
    }
}

impl From<Vocabulary> for Vec<FeatureKey> {
    fn from(v: Vocabulary) -> Self {
        v.keys
    }
}

impl Vocabulary {
    /// Sorts and deduplicates `keys`.
    pub fn from_keys(keys: impl IntoIterator<Item = FeatureKey>) -> Self {
        let keys: Vec<FeatureKey> = keys.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let index = keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        Vocabulary { keys, index }
    }

    pub fn build(dataset: &Dataset) -> Self {
        Vocabulary::from_keys(dataset.packets().map(FeatureKey::from))
    }

    pub fn keys(&self) -> &[FeatureKey] {
        &self.keys
    }

    /// Vector length, OOV slot included.
    pub fn len(&self) -> usize {
        self.keys.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn oov_index(&self) -> usize {
        self.keys.len()
    }

    pub fn index_of(&self, key: FeatureKey) -> usize {
        self.index.get(&key).copied().unwrap_or(self.keys.len())
    }
}

/// Shorthand for [`Vocabulary::build`].
pub fn build_vocabulary(dataset: &Dataset) -> Vocabulary {
    Vocabulary::build(dataset)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Binary,
    Counts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<u32>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `n` items drawn uniformly with replacement from `pool`.
pub fn sample_instance<T: Clone, R: Rng + ?Sized>(pool: &[T], n: usize, rng: &mut R) -> Result<Vec<T>, FeatureError> {
    if pool.is_empty() {
        return Err(FeatureError::EmptyPool);
    }
    if n == 0 {
        return Err(FeatureError::ZeroSize);
    }
    Ok((0..n).map(|_| pool[rng.random_range(0..pool.len())].clone()).collect())
}

/// Presence or count of every vocabulary key among `packets`; unknown keys
/// land in the OOV slot.
pub fn extract<I>(packets: I, vocab: &Vocabulary, kind: FeatureKind) -> FeatureVector
where
    I: IntoIterator,
    I::Item: Into<FeatureKey>,
{
    let mut values = vec![0u32; vocab.len()];
    for p in packets {
        let slot = &mut values[vocab.index_of(p.into())];
        *slot = match kind {
            FeatureKind::Binary => 1,
            FeatureKind::Counts => *slot + 1,
        };
    }
    FeatureVector { kind, values }
}

impl From<&FeatureKey> for FeatureKey {
    fn from(k: &FeatureKey) -> Self {
        *k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::trace::{Label, LabeledTrace, Metadata, Os, Service};
    use proptest::prelude::*;

    const TO: Direction = Direction::ToService;
    const FROM: Direction = Direction::FromService;

    fn k(len: u32, dir: Direction) -> FeatureKey {
        FeatureKey::new(len, dir)
    }

    fn dataset(keys: &[(u32, Direction)]) -> Dataset {
        let traces = keys
            .iter()
            .map(|&(len, dir)| {
                LabeledTrace::new(
                    Label::action(Service::IMessage, Os::Ios, crate::trace::Action::Stop),
                    vec![PacketRecord::new(0.0, dir, len, "s")],
                )
            })
            .collect();
        Dataset::new(Metadata::new("t"), traces)
    }

    #[test]
    fn vocabulary_has_keys_plus_oov() {
        let v = build_vocabulary(&dataset(&[(100, TO), (100, FROM), (100, TO)]));
        assert_eq!(v.keys(), &[k(100, TO), k(100, FROM)]);
        assert_eq!(v.len(), 3);
        assert_eq!(v.oov_index(), 2);
        assert_eq!(v.index_of(k(7, TO)), 2);
    }

    #[test]
    fn extract_binary_and_counts() {
        let v = Vocabulary::from_keys([k(90, TO), k(100, TO)]);
        let pkts = [k(100, TO), k(100, TO)];
        assert_eq!(extract(&pkts, &v, FeatureKind::Binary).values, vec![0, 1, 0]);
        assert_eq!(extract(&pkts, &v, FeatureKind::Counts).values, vec![0, 2, 0]);
        assert_eq!(extract(&[k(999, TO)], &v, FeatureKind::Counts).values, vec![0, 0, 1]);
    }

    #[test]
    fn sample_instance_edge_cases() {
        let mut rng = stream(1, &[]);
        assert_eq!(sample_instance(&[5u8], 5, &mut rng).unwrap(), vec![5; 5]);
        assert_eq!(sample_instance::<u8, _>(&[], 3, &mut rng), Err(FeatureError::EmptyPool));
        assert_eq!(sample_instance(&[1u8], 0, &mut rng), Err(FeatureError::ZeroSize));
    }

    #[test]
    fn two_length_pool_is_drawn_evenly() {
        // chi-square goodness of fit against 50/50 over 2000 instances of 50
        let mut rng = stream(2, &[]);
        let pool = [k(100, TO), k(200, TO)];
        let (mut a, mut total) = (0u64, 0u64);
        for _ in 0..2000 {
            let inst = sample_instance(&pool, 50, &mut rng).unwrap();
            a += inst.iter().filter(|x| x.length == 100).count() as u64;
            total += 50;
        }
        let e = total as f64 / 2.0;
        let b = total - a;
        let chi2 = (a as f64 - e).powi(2) / e + (b as f64 - e).powi(2) / e;
        // 1 degree of freedom, p = 0.001
        assert!(chi2 < 10.83, "chi2 {chi2}");
    }

    fn arb_keys() -> impl Strategy<Value = Vec<FeatureKey>> {
        prop::collection::vec(
            (0u32..12, prop::bool::ANY).prop_map(|(l, to)| k(l * 10, if to { TO } else { FROM })),
            0..40,
        )
    }

    proptest! {
        #[test]
        fn binary_is_clamped_counts(vocab in arb_keys(), pkts in arb_keys()) {
            let v = Vocabulary::from_keys(vocab);
            let b = extract(&pkts, &v, FeatureKind::Binary);
            let c = extract(&pkts, &v, FeatureKind::Counts);
            prop_assert_eq!(b.values.len(), v.len());
            for (x, y) in b.values.iter().zip(&c.values) {
                prop_assert_eq!(*x, (*y).min(1));
            }
            prop_assert_eq!(c.values.iter().sum::<u32>() as usize, pkts.len());
        }

        #[test]
        fn extraction_ignores_packet_order(vocab in arb_keys(), mut pkts in arb_keys(), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let v = Vocabulary::from_keys(vocab);
            let before = extract(&pkts, &v, FeatureKind::Counts);
            pkts.shuffle(&mut stream(seed, &[]));
            prop_assert_eq!(extract(&pkts, &v, FeatureKind::Counts), before);
        }

        #[test]
        fn vocabulary_ignores_trace_order(mut keys in prop::collection::vec((0u32..50, prop::bool::ANY), 1..30), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let to_dir = |b: bool| if b { TO } else { FROM };
            let a: Vec<_> = keys.iter().map(|&(l, d)| (l + 1, to_dir(d))).collect();
            keys.shuffle(&mut stream(seed, &[]));
            let b: Vec<_> = keys.iter().map(|&(l, d)| (l + 1, to_dir(d))).collect();
            prop_assert_eq!(build_vocabulary(&dataset(&a)), build_vocabulary(&dataset(&b)));
        }
    }
}
