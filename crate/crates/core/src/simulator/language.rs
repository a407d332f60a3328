use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::trace::Language;

/// Character encoding width of a cluster of text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Charset {
    Ascii,
    Unicode2,
    Unicode3,
}

impl Charset {
    pub fn bytes_per_char(self) -> u64 {
        match self {
            Charset::Ascii => 1,
            Charset::Unicode2 => 2,
            Charset::Unicode3 => 3,
        }
    }
}

/// Log-normal character count, rounded and clipped to `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceLength {
    pub median: f64,
    pub sigma: f64,
    #[serde(default = "default_min_chars")]
    pub min: u32,
    #[serde(default = "default_max_chars")]
    pub max: u32,
}

fn default_min_chars() -> u32 {
    2
}

fn default_max_chars() -> u32 {
    400
}

impl SentenceLength {
    pub fn new(median: f64, sigma: f64) -> Self {
        SentenceLength {
            median,
            sigma,
            min: default_min_chars(),
            max: default_max_chars(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let dist = LogNormal::new(self.median.ln(), self.sigma).expect("validated parameters");
        let x: f64 = dist.sample(rng);
        (x.round() as u32).clamp(self.min, self.max)
    }
}

/// How a language's messages are encoded.
///
/// Each message picks one charset cluster from `charset_mix`. Inside a
/// non-ASCII cluster every character independently stays ASCII with
/// probability `ascii_run_fraction` (punctuation, digits, unaccented letters)
/// and otherwise takes the cluster's width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageProfile {
    pub language: Language,
    pub charset_mix: BTreeMap<Charset, f64>,
    #[serde(default)]
    pub ascii_run_fraction: f64,
    pub sentence_length: SentenceLength,
}

impl LanguageProfile {
    /// A language written in exactly one charset.
    pub fn single(language: Language, charset: Charset, sentence_length: SentenceLength) -> Self {
        LanguageProfile {
            language,
            charset_mix: BTreeMap::from([(charset, 1.0)]),
            ascii_run_fraction: 0.0,
            sentence_length,
        }
    }

    /// One cluster, no ASCII mixed in.
    pub fn is_single_charset(&self) -> bool {
        self.charset_mix.values().filter(|&&p| p > 0.0).count() == 1 && self.ascii_run_fraction == 0.0
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |why: String| Err(SimError::InvalidProfile { language: self.language, reason: why });
        if self.language == Language::None {
            return bad("profile needs a real language".into());
        }
        if self.charset_mix.values().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("charset probabilities must lie in [0, 1]".into());
        }
        let total: f64 = self.charset_mix.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("charset probabilities sum to {total}, not 1"));
        }
        if !(0.0..=1.0).contains(&self.ascii_run_fraction) {
            return bad("ascii_run_fraction must lie in [0, 1]".into());
        }
        let s = &self.sentence_length;
        if !(s.median.is_finite() && s.median > 0.0 && s.sigma.is_finite() && s.sigma >= 0.0) {
            return bad("sentence length needs a positive median and non-negative sigma".into());
        }
        if s.min < 1 || s.min > s.max {
            return bad("sentence length bounds must satisfy 1 <= min <= max".into());
        }
        Ok(())
    }

    fn pick_charset<R: Rng + ?Sized>(&self, rng: &mut R) -> Charset {
        let mut u: f64 = rng.random();
        let mut last = Charset::Ascii;
        for (&c, &p) in &self.charset_mix {
            if p <= 0.0 {
                continue;
            }
            if u < p {
                return c;
            }
            u -= p;
            last = c;
        }
        last
    }
}

/// Encoded byte length of a `chars`-character message in `profile`.
pub fn encoded_length<R: Rng + ?Sized>(chars: u32, profile: &LanguageProfile, rng: &mut R) -> u64 {
    let charset = profile.pick_charset(rng);
    let width = charset.bytes_per_char();
    if charset == Charset::Ascii || profile.ascii_run_fraction == 0.0 {
        return u64::from(chars) * width;
    }
    (0..chars)
        .map(|_| {
            if rng.random::<f64>() < profile.ascii_run_fraction {
                1
            } else {
                width
            }
        })
        .sum()
}

/// The six shipped language profiles. Sentence-length parameters are
/// synthetic; the charset structure follows each writing system.
pub fn builtin_language_profiles() -> Vec<LanguageProfile> {
    let mixed = |language, ascii: f64, arf, median, sigma| LanguageProfile {
        language,
        charset_mix: BTreeMap::from([(Charset::Ascii, ascii), (Charset::Unicode2, 1.0 - ascii)]),
        ascii_run_fraction: arf,
        sentence_length: SentenceLength::new(median, sigma),
    };
    vec![
        LanguageProfile::single(Language::Chinese, Charset::Unicode3, SentenceLength::new(42.0, 0.40)),
        LanguageProfile::single(Language::English, Charset::Ascii, SentenceLength::new(21.4, 0.48)),
        mixed(Language::French, 0.35, 0.93, 50.0, 0.40),
        mixed(Language::German, 0.45, 0.95, 74.0, 0.40),
        LanguageProfile::single(Language::Russian, Charset::Unicode2, SentenceLength::new(44.6, 0.40)),
        mixed(Language::Spanish, 0.40, 0.95, 42.0, 0.44),
    ]
}
