use std::collections::{BTreeSet, HashMap};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::querygen::{
    emotion_vocabulary, TemplateBank, CONJUNCTION, EMOTION_PLACEHOLDER, GENDERS, GENDER_PLACEHOLDER,
};

pub const UNKNOWN_TOKEN: &str = "<unk>";
pub const UNKNOWN_ID: usize = 0;

/// Token to id map. Id 0 is the unknown token; known tokens follow in
/// sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

/// Lowercase, split on whitespace, strip surrounding punctuation.
pub fn split_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
}

impl Vocab {
    /// Known tokens are deduplicated and sorted; `<unk>` is prepended.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let known: BTreeSet<String> = tokens
            .into_iter()
            .flat_map(|t| split_words(t.as_ref()).collect::<Vec<_>>())
            .collect();
        let tokens: Vec<String> = std::iter::once(UNKNOWN_TOKEN.to_string()).chain(known).collect();
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, ids }
    }

    /// Words of every bank template (placeholders removed), the emotion and
    /// gender vocabulary, the caption conjunction, and any `extra` text.
    pub fn build<'a>(bank: &TemplateBank, extra: impl IntoIterator<Item = &'a str>) -> Self {
        let templates = bank
            .all_strings()
            .map(|s| s.replace(EMOTION_PLACEHOLDER, " ").replace(GENDER_PLACEHOLDER, " "));
        let words: Vec<String> = templates
            .chain(emotion_vocabulary().map(String::from))
            .chain(GENDERS.iter().map(|g| g.to_string()))
            .chain(std::iter::once(CONJUNCTION.to_string()))
            .chain(extra.into_iter().map(String::from))
            .collect();
        Self::from_tokens(words)
    }

    /// Rebuilds a vocabulary from its stored token list.
    pub fn from_list(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNKNOWN_TOKEN) {
            return Err(Error::Checkpoint(format!("vocabulary must start with {UNKNOWN_TOKEN}")));
        }
        let ids: HashMap<String, usize> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if ids.len() != tokens.len() || tokens[1..].windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Checkpoint("vocabulary tokens must be unique and sorted".into()));
        }
        Ok(Self { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNKNOWN_ID)
    }

    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        split_words(text).map(|w| self.id(&w)).collect()
    }

    /// Hex sha256 over the newline-joined token list.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        format!("{:x}", h.finalize())
    }
}
