use std::collections::BTreeMap;
use std::path::Path;

use super::AugmentError;
use crate::text::normalize;

const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.txt");

/// Synonym table keyed by lowercase word or phrase.
///
/// File format, one entry per line: `phrase = alt one, alt two`. Blank lines
/// and lines starting with `#` are ignored. Entries are directional; list
/// both directions for a symmetric pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<Vec<String>, Vec<String>>,
    longest: usize,
}

impl Lexicon {
    pub fn parse(content: &str) -> Result<Self, AugmentError> {
        let mut lexicon = Lexicon::default();
        for (i, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, alts) = line.split_once('=').ok_or_else(|| AugmentError::Lexicon {
                line: i + 1,
                reason: "expected `phrase = alternative, ...`".into(),
            })?;
            let key = normalize(key);
            if key.is_empty() {
                return Err(AugmentError::Lexicon {
                    line: i + 1,
                    reason: "empty phrase".into(),
                });
            }
            let alts: Vec<String> = alts
                .split(',')
                .map(normalize)
                .filter(|a| !a.is_empty() && *a != key)
                .collect();
            lexicon.insert(&key, alts);
        }
        Ok(lexicon)
    }

    pub fn load(path: &Path) -> Result<Self, AugmentError> {
        let content = std::fs::read_to_string(path).map_err(|e| AugmentError::Lexicon {
            line: 0,
            reason: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&content)
    }

    /// The lexicon shipped with the crate, tuned to the command domain.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon parses")
    }

    pub fn insert(&mut self, phrase: &str, alternatives: Vec<String>) {
        let key: Vec<String> = phrase.split_whitespace().map(str::to_lowercase).collect();
        if key.is_empty() {
            return;
        }
        self.longest = self.longest.max(key.len());
        let slot = self.entries.entry(key).or_default();
        for alt in alternatives {
            if !slot.contains(&alt) {
                slot.push(alt);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub(crate) fn longest_phrase(&self) -> usize {
        self.longest
    }

    pub(crate) fn lookup(&self, words: &[String]) -> Option<&[String]> {
        self.entries.get(words).map(Vec::as_slice)
    }
}
