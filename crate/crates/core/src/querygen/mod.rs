//! Text queries from labels, binned dimensional attributes and binned
//! acoustic features, and the caption sampling policies built on them.

mod bank;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bank::{
    build_template_bank, Attribute, Condition, ConditionalTemplate, LabelTemplates, TemplateBank,
    TemplateEntry, CONJUNCTION, EMOTION_PLACEHOLDER, GENDER_PLACEHOLDER,
};

use crate::corpus::{assign_bin, compute_bin_thresholds, BinLabel, BinThresholds, UtteranceRecord, BIN_PROPORTIONS};
use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Emotion label to adjective. Adjective-form labels map to themselves.
const EMOTION_ADJECTIVES: [(&str, &str); 15] = [
    ("happiness", "happy"),
    ("anger", "angry"),
    ("sadness", "sad"),
    ("fear", "fearful"),
    ("disgust", "disgusted"),
    ("surprise", "surprised"),
    ("contempt", "contemptuous"),
    ("neutral", "neutral"),
    ("happy", "happy"),
    ("angry", "angry"),
    ("sad", "sad"),
    ("fearful", "fearful"),
    ("disgusted", "disgusted"),
    ("surprised", "surprised"),
    ("contemptuous", "contemptuous"),
];

pub const GENDERS: [&str; 2] = ["male", "female"];

pub fn emotion_adjective(label: &str) -> Result<&'static str> {
    let key = label.trim().to_lowercase();
    EMOTION_ADJECTIVES
        .iter()
        .find(|(l, _)| *l == key)
        .map(|(_, adj)| *adj)
        .ok_or_else(|| Error::UnknownLabel(label.to_string()))
}

/// All labels and adjectives the adjective table knows about.
pub fn emotion_vocabulary() -> impl Iterator<Item = &'static str> {
    EMOTION_ADJECTIVES.iter().flat_map(|(l, a)| [*l, *a])
}

pub fn emotion_queries(bank: &TemplateBank, label: &str) -> Result<Vec<String>> {
    let adj = emotion_adjective(label)?;
    Ok(bank
        .labels
        .emotion
        .iter()
        .map(|t| t.replace(EMOTION_PLACEHOLDER, adj))
        .collect())
}

pub fn gender_queries(bank: &TemplateBank, gender: &str) -> Result<Vec<String>> {
    let g = gender.trim().to_lowercase();
    if !GENDERS.contains(&g.as_str()) {
        return Err(Error::UnknownGender(gender.to_string()));
    }
    Ok(bank
        .labels
        .gender
        .iter()
        .map(|t| t.replace(GENDER_PLACEHOLDER, &g))
        .collect())
}

/// Bins of the other attributes of the same utterance, plus its emotion
/// adjective when one is known.
#[derive(Debug, Clone, Default)]
pub struct QueryContext {
    pub bins: BTreeMap<Attribute, BinLabel>,
    pub emotion_adjective: Option<String>,
}

pub fn queries_for_attribute(
    bank: &TemplateBank,
    attribute: Attribute,
    bin: BinLabel,
    context: &QueryContext,
) -> Result<Vec<String>> {
    let base = bank.templates(attribute, bin);
    let mut out = base.to_vec();
    for c in bank
        .conditional
        .iter()
        .filter(|c| c.attribute == attribute && c.bin == bin)
    {
        match &c.condition {
            Condition::Emotion => {
                if let Some(adj) = &context.emotion_adjective {
                    out.push(c.template.replace(EMOTION_PLACEHOLDER, adj));
                }
            }
            Condition::PitchSigma(when) => {
                let sigma = context
                    .bins
                    .get(&Attribute::PitchSigma)
                    .ok_or(Error::MissingContext {
                        attribute: attribute.name(),
                        missing: "pitch_sigma bin",
                    })?;
                if when.contains(sigma) {
                    out.extend(base.iter().map(|b| format!("{b} {}", c.template)));
                }
            }
        }
    }
    Ok(out)
}

/// Per-attribute cut points fitted on a training corpus.
pub type Thresholds = BTreeMap<Attribute, BinThresholds>;

fn attribute_value(
    attribute: Attribute,
    record: &UtteranceRecord,
    fv: Option<&FeatureVector>,
) -> Option<f64> {
    match attribute {
        Attribute::Arousal => record.arousal,
        Attribute::Valence => record.valence,
        Attribute::Dominance => record.dominance,
        Attribute::PitchMu => fv.and_then(|f| f.pitch_mu),
        Attribute::PitchSigma => fv.and_then(|f| f.pitch_sigma),
        Attribute::Intensity => fv.map(|f| f.intensity_db),
        Attribute::Duration => fv.map(|f| f.duration_s),
        Attribute::Jitter => fv.and_then(|f| f.jitter),
        Attribute::Shimmer => fv.and_then(|f| f.shimmer),
    }
}

/// Fits 30/40/30 thresholds for every attribute that has at least one value.
pub fn fit_thresholds(
    records: &[UtteranceRecord],
    features: &dyn Fn(&str) -> Option<FeatureVector>,
) -> Result<Thresholds> {
    let fvs: Vec<Option<FeatureVector>> = records.iter().map(|r| features(&r.id)).collect();
    let mut out = Thresholds::new();
    for attribute in Attribute::ALL {
        let values: Vec<f64> = records
            .iter()
            .zip(&fvs)
            .filter_map(|(r, fv)| attribute_value(attribute, r, fv.as_ref()))
            .collect();
        if !values.is_empty() {
            out.insert(attribute, compute_bin_thresholds(&values, BIN_PROPORTIONS)?);
        }
    }
    Ok(out)
}

/// All queries describing one utterance, in the fixed source order: emotion,
/// gender, then attributes in `Attribute::ALL` order. Labels the tables do not
/// cover contribute nothing.
pub fn caption_pool(
    bank: &TemplateBank,
    record: &UtteranceRecord,
    fv: Option<&FeatureVector>,
    thresholds: &Thresholds,
) -> Vec<String> {
    let mut pool = Vec::new();
    let adjective = record
        .emotion
        .as_deref()
        .and_then(|e| emotion_adjective(e).ok());
    if let Some(label) = &record.emotion {
        pool.extend(emotion_queries(bank, label).unwrap_or_default());
    }
    if let Some(g) = &record.gender {
        pool.extend(gender_queries(bank, g).unwrap_or_default());
    }

    let mut context = QueryContext {
        bins: BTreeMap::new(),
        emotion_adjective: adjective.map(str::to_string),
    };
    for attribute in Attribute::ALL {
        if let (Some(v), Some(t)) = (attribute_value(attribute, record, fv), thresholds.get(&attribute)) {
            context.bins.insert(attribute, assign_bin(v, t));
        }
    }
    for attribute in Attribute::ALL {
        if let Some(&bin) = context.bins.get(&attribute) {
            // Only missing pitch context can fail here; such attributes are skipped.
            if let Ok(qs) = queries_for_attribute(bank, attribute, bin, &context) {
                pool.extend(qs);
            }
        }
    }
    pool
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionMode {
    OnlyEmo,
    NoEmoRandN,
    RandN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionPolicy {
    pub mode: CaptionMode,
    /// Ignored by `OnlyEmo`.
    pub max_queries: usize,
}

impl CaptionPolicy {
    pub fn only_emo() -> Self {
        Self {
            mode: CaptionMode::OnlyEmo,
            max_queries: 1,
        }
    }

    pub fn rand(n: usize) -> Self {
        Self {
            mode: CaptionMode::RandN,
            max_queries: n,
        }
    }

    pub fn no_emo_rand(n: usize) -> Self {
        Self {
            mode: CaptionMode::NoEmoRandN,
            max_queries: n,
        }
    }

    /// Parses `only-emo`, `randN` or `no-emo-randN`; without a numeric suffix
    /// `default_n` is used.
    pub fn parse(s: &str, default_n: usize) -> Result<Self> {
        let bad = || Error::Config(format!("invalid caption mode `{s}` (expected only-emo, rand<N> or no-emo-rand<N>)"));
        let s = s.trim().to_lowercase().replace('_', "-");
        if s == "only-emo" {
            return Ok(Self::only_emo());
        }
        let (no_emo, rest) = match s.strip_prefix("no-emo-") {
            Some(rest) => (true, rest),
            None => (false, s.as_str()),
        };
        let digits = rest.strip_prefix("rand").ok_or_else(bad)?;
        let n = if digits.is_empty() {
            default_n
        } else {
            digits.parse().map_err(|_| bad())?
        };
        if n == 0 {
            return Err(bad());
        }
        Ok(if no_emo {
            Self::no_emo_rand(n)
        } else {
            Self::rand(n)
        })
    }
}

impl fmt::Display for CaptionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            CaptionMode::OnlyEmo => f.write_str("only-emo"),
            CaptionMode::RandN => write!(f, "rand{}", self.max_queries),
            CaptionMode::NoEmoRandN => write!(f, "no-emo-rand{}", self.max_queries),
        }
    }
}

impl FromStr for CaptionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, 5)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub text: String,
    pub parts: Vec<String>,
}

impl Caption {
    pub fn from_parts(parts: Vec<String>) -> Self {
        Self {
            text: parts.join(CONJUNCTION),
            parts,
        }
    }
}

/// Queries the policy may draw from: the emotion queries under `OnlyEmo`,
/// the pool without them under `NoEmoRandN`, the whole pool otherwise.
pub fn effective_pool<'a>(
    pool: &'a [String],
    policy: &CaptionPolicy,
    emotion_queries: &'a [String],
) -> Vec<&'a String> {
    match policy.mode {
        CaptionMode::OnlyEmo => emotion_queries.iter().collect(),
        CaptionMode::NoEmoRandN => pool.iter().filter(|q| !emotion_queries.contains(q)).collect(),
        CaptionMode::RandN => pool.iter().collect(),
    }
}

/// Draws one training caption from an utterance's query pool.
pub fn sample_caption<R: Rng + ?Sized>(
    pool: &[String],
    policy: &CaptionPolicy,
    emotion_queries: &[String],
    rng: &mut R,
) -> Result<Caption> {
    let effective = effective_pool(pool, policy, emotion_queries);
    if effective.is_empty() {
        return Err(Error::EmptyPool);
    }
    match policy.mode {
        CaptionMode::OnlyEmo => {
            let pick = rng.random_range(0..effective.len());
            Ok(Caption::from_parts(vec![effective[pick].clone()]))
        }
        CaptionMode::RandN | CaptionMode::NoEmoRandN => {
            let n = policy.max_queries.max(1);
            let k = rng.random_range(1..=n).min(effective.len());
            let picked = index::sample(rng, effective.len(), k);
            Ok(Caption::from_parts(
                picked.iter().map(|i| effective[i].clone()).collect(),
            ))
        }
    }
}
