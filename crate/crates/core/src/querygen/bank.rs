//! The template bank: every sentence the query generator can emit.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::BinLabel;
use crate::error::{Error, Result};

pub const EMOTION_PLACEHOLDER: &str = "[EMOTION]";
pub const GENDER_PLACEHOLDER: &str = "[GENDER]";
pub const CONJUNCTION: &str = " and ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Arousal,
    Valence,
    Dominance,
    PitchMu,
    PitchSigma,
    Intensity,
    Duration,
    Jitter,
    Shimmer,
}

impl Attribute {
    /// Caption pool order.
    pub const ALL: [Attribute; 9] = [
        Attribute::Arousal,
        Attribute::Valence,
        Attribute::Dominance,
        Attribute::PitchMu,
        Attribute::PitchSigma,
        Attribute::Intensity,
        Attribute::Duration,
        Attribute::Jitter,
        Attribute::Shimmer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Arousal => "arousal",
            Attribute::Valence => "valence",
            Attribute::Dominance => "dominance",
            Attribute::PitchMu => "pitch_mu",
            Attribute::PitchSigma => "pitch_sigma",
            Attribute::Intensity => "intensity",
            Attribute::Duration => "duration",
            Attribute::Jitter => "jitter",
            Attribute::Shimmer => "shimmer",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown attribute `{s}`")))
    }
}

/// When a conditional template applies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "bins")]
pub enum Condition {
    /// Appended to the base query when the pitch-deviation bin is one of these.
    PitchSigma(Vec<BinLabel>),
    /// Requires an emotion adjective for `[EMOTION]`.
    Emotion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionalTemplate {
    pub attribute: Attribute,
    pub bin: BinLabel,
    /// For pitch-deviation conditions this is a suffix appended to each base
    /// query of (attribute, bin); for emotion conditions a full sentence.
    pub template: String,
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateEntry {
    pub attribute: Attribute,
    pub bin: BinLabel,
    pub templates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTemplates {
    pub emotion: Vec<String>,
    pub gender: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateBank {
    pub entries: BTreeMap<(Attribute, BinLabel), Vec<String>>,
    pub conditional: Vec<ConditionalTemplate>,
    pub labels: LabelTemplates,
}

/// On-disk form of a bank override.
#[derive(Debug, Serialize, Deserialize)]
struct BankFile {
    entries: Vec<TemplateEntry>,
    #[serde(default)]
    conditional: Vec<ConditionalTemplate>,
    labels: LabelTemplates,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for TemplateBank {
    fn default() -> Self {
        build_template_bank()
    }
}

/// The full query table for dimensional attributes and expert features.
pub fn build_template_bank() -> TemplateBank {
    use Attribute::*;
    use BinLabel::*;

    let table: [(Attribute, BinLabel, &[&str]); 27] = [
        (Arousal, Low, &["has low arousal", "speaker is calm"]),
        (Arousal, Mid, &["arousal is at an average level"]),
        (Arousal, High, &["has high arousal", "speaker is aroused"]),
        (Valence, Low, &["has low valence", "speaker appears to be in a bad mood"]),
        (Valence, Mid, &["valence is at an average level"]),
        (Valence, High, &["has high valence", "speaker appears to be in a good mood"]),
        (Dominance, Low, &["has low dominance"]),
        (Dominance, Mid, &["dominance is at an average level"]),
        (Dominance, High, &["has high dominance", "speaker appears to be dominant"]),
        (PitchMu, Low, &["has a low pitch"]),
        (PitchMu, Mid, &["has an average pitch", "has a normal pitch"]),
        (PitchMu, High, &["has a high pitch"]),
        (PitchSigma, Low, &["has a low pitch variation"]),
        (
            PitchSigma,
            Mid,
            &[
                "has a normal pitch variation",
                "has a low pitch variance",
                "has a very unstable pitch",
                "has a very unstable phonation",
            ],
        ),
        (
            PitchSigma,
            High,
            &[
                "has a high pitch variation",
                "has a high pitch variance",
                "has a very stable pitch",
                "has a very stable phonation",
            ],
        ),
        (
            Intensity,
            Low,
            &["has a low equivalent sound level", "is quiet", "is almost silent"],
        ),
        (
            Intensity,
            Mid,
            &[
                "has a normal equivalent sound level",
                "has an average equivalent sound level",
                "loudness is just about right",
            ],
        ),
        (
            Intensity,
            High,
            &[
                "has a high equivalent sound level",
                "sound pressure is elevated",
                "sound level is elevated",
                "is loud",
            ],
        ),
        (
            Duration,
            Low,
            &[
                "has a short duration",
                "has a small duration",
                "is a short sentence",
                "lasts a little time",
                "is short",
            ],
        ),
        (
            Duration,
            Mid,
            &[
                "is of average duration",
                "is of average length",
                "duration is medium",
                "is neither long nor short",
            ],
        ),
        (
            Duration,
            High,
            &[
                "has a long duration",
                "has a big duration",
                "is a long sentence",
                "lasts a long time",
                "is long",
            ],
        ),
        (Jitter, Low, &["has a low jitter"]),
        (Jitter, Mid, &["has a normal jitter"]),
        (Jitter, High, &["has a high jitter"]),
        (Shimmer, Low, &["has a low shimmer"]),
        (Shimmer, Mid, &["has a normal shimmer"]),
        (Shimmer, High, &["has a high shimmer"]),
    ];
    let entries = table
        .iter()
        .map(|(a, b, t)| ((*a, *b), strings(t)))
        .collect();

    let mut conditional = vec![
        ConditionalTemplate {
            attribute: Arousal,
            bin: Low,
            template: "speaker is not very [EMOTION]".into(),
            condition: Condition::Emotion,
        },
        ConditionalTemplate {
            attribute: Arousal,
            bin: High,
            template: "speaker is very [EMOTION]".into(),
            condition: Condition::Emotion,
        },
    ];
    // Perturbation queries that contrast with the pitch-deviation bin.
    let suffixes: [(BinLabel, &str, &[BinLabel]); 6] = [
        (Low, "but a high pitch variance", &[High]),
        (Low, "but not a low pitch variance", &[Mid, High]),
        (Low, "but the pitch is unstable", &[High]),
        (High, "but a low pitch variance", &[Low]),
        (High, "but not a high pitch variance", &[Low, Mid]),
        (High, "but the pitch is stable", &[Low]),
    ];
    for attribute in [Jitter, Shimmer] {
        for (bin, suffix, when) in suffixes {
            conditional.push(ConditionalTemplate {
                attribute,
                bin,
                template: suffix.to_string(),
                condition: Condition::PitchSigma(when.to_vec()),
            });
        }
    }

    TemplateBank {
        entries,
        conditional,
        labels: LabelTemplates {
            emotion: strings(&["this is a [EMOTION] instance", "speaker is [EMOTION]"]),
            gender: strings(&["a [GENDER] is speaking", "the speaker is [GENDER]"]),
        },
    }
}

fn check_template(template: &str, allowed: &[&str]) -> Result<()> {
    let invalid = |reason: String| Error::InvalidTemplate {
        template: template.to_string(),
        reason,
    };
    if template.trim().is_empty() {
        return Err(invalid("empty".into()));
    }
    if template.contains(CONJUNCTION) {
        return Err(invalid(format!("contains the conjunction `{}`", CONJUNCTION.trim())));
    }
    let mut rest = template;
    while let Some(start) = rest.find('[') {
        let end = rest[start..]
            .find(']')
            .ok_or_else(|| invalid("unterminated placeholder".into()))?;
        let placeholder = &rest[start..start + end + 1];
        if !allowed.contains(&placeholder) {
            return Err(invalid(format!("placeholder {placeholder} not allowed here")));
        }
        rest = &rest[start + end + 1..];
    }
    if rest.contains(']') {
        return Err(invalid("stray `]`".into()));
    }
    Ok(())
}

impl TemplateBank {
    pub fn templates(&self, attribute: Attribute, bin: BinLabel) -> &[String] {
        self.entries
            .get(&(attribute, bin))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Checks coverage of every (attribute, bin) pair and the placeholder rules.
    pub fn validate(&self) -> Result<()> {
        for attribute in Attribute::ALL {
            for bin in BinLabel::ALL {
                let ts = self.templates(attribute, bin);
                if ts.is_empty() {
                    return Err(Error::InvalidTemplate {
                        template: format!("({attribute}, {bin})"),
                        reason: "no templates".into(),
                    });
                }
                for t in ts {
                    check_template(t, &[])?;
                }
            }
        }
        for c in &self.conditional {
            match c.condition {
                Condition::Emotion => {
                    check_template(&c.template, &[EMOTION_PLACEHOLDER])?;
                    if !c.template.contains(EMOTION_PLACEHOLDER) {
                        return Err(Error::InvalidTemplate {
                            template: c.template.clone(),
                            reason: "emotion-conditioned template lacks [EMOTION]".into(),
                        });
                    }
                }
                Condition::PitchSigma(_) => check_template(&c.template, &[])?,
            }
        }
        for (ts, placeholder) in [
            (&self.labels.emotion, EMOTION_PLACEHOLDER),
            (&self.labels.gender, GENDER_PLACEHOLDER),
        ] {
            if ts.is_empty() {
                return Err(Error::InvalidTemplate {
                    template: placeholder.into(),
                    reason: "no label templates".into(),
                });
            }
            for t in ts {
                check_template(t, &[placeholder])?;
                if !t.contains(placeholder) {
                    return Err(Error::InvalidTemplate {
                        template: t.clone(),
                        reason: format!("missing {placeholder}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Every template string in the bank, including label and conditional ones.
    pub fn all_strings(&self) -> impl Iterator<Item = &str> {
        self.entries
            .values()
            .flatten()
            .chain(self.conditional.iter().map(|c| &c.template))
            .chain(&self.labels.emotion)
            .chain(&self.labels.gender)
            .map(String::as_str)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = BankFile {
            entries: self
                .entries
                .iter()
                .map(|(&(attribute, bin), templates)| TemplateEntry {
                    attribute,
                    bin,
                    templates: templates.clone(),
                })
                .collect(),
            conditional: self.conditional.clone(),
            labels: self.labels.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BankFile = serde_json::from_str(text)?;
        let mut entries: BTreeMap<(Attribute, BinLabel), Vec<String>> = BTreeMap::new();
        for e in file.entries {
            entries.entry((e.attribute, e.bin)).or_default().extend(e.templates);
        }
        let bank = TemplateBank {
            entries,
            conditional: file.conditional,
            labels: file.labels,
        };
        bank.validate()?;
        Ok(bank)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bank_is_valid() {
        build_template_bank().validate().unwrap();
    }

    #[test]
    fn table_spot_checks() {
        let bank = build_template_bank();
        assert!(bank.templates(Attribute::PitchMu, BinLabel::Low).contains(&"has a low pitch".into()));
        assert!(bank.templates(Attribute::Arousal, BinLabel::Low).contains(&"speaker is calm".into()));
        assert!(bank
            .templates(Attribute::Duration, BinLabel::High)
            .contains(&"is a long sentence".into()));
    }

    #[test]
    fn json_round_trip() {
        let bank = build_template_bank();
        assert_eq!(TemplateBank::from_json(&bank.to_json().unwrap()).unwrap(), bank);
    }

    #[test]
    fn override_rejects_bad_placeholders() {
        let mut bank = build_template_bank();
        bank.entries
            .get_mut(&(Attribute::PitchMu, BinLabel::Low))
            .unwrap()
            .push("pitch is [LEVEL]".into());
        let err = TemplateBank::from_json(&bank.to_json().unwrap()).unwrap_err();
        assert!(matches!(err, Error::InvalidTemplate { .. }));

        let mut bank = build_template_bank();
        bank.labels.gender.push("the speaker is [EMOTION]".into());
        assert!(TemplateBank::from_json(&bank.to_json().unwrap()).is_err());

        let mut bank = build_template_bank();
        bank.entries
            .get_mut(&(Attribute::PitchMu, BinLabel::Low))
            .unwrap()
            .push("low and deep".into());
        assert!(TemplateBank::from_json(&bank.to_json().unwrap()).is_err());
    }

    #[test]
    fn override_requires_coverage() {
        let mut bank = build_template_bank();
        bank.entries.remove(&(Attribute::Shimmer, BinLabel::Mid));
        assert!(TemplateBank::from_json(&bank.to_json().unwrap()).is_err());
    }
}
