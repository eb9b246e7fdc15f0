//! Deterministic rule-based paraphrasing.
//!
//! Candidates are the product of four rewrite families applied in a fixed
//! order: synonym substitution, contraction toggling, statement/question
//! reformation and politeness insertion. Each family either keeps the text or
//! replaces it with one of its alternatives, so the candidate set is the
//! Cartesian product of the per-family choices (bounded by
//! `max_enumeration`). The seed only decides which candidates survive the
//! per-statement cap.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::lexicon::Lexicon;
use super::{ParaphraseBackend, ProviderError, ProviderKind};
use crate::text::normalize;

const CONTRACTIONS: &[(&str, &str)] = &[
    ("i am", "i'm"),
    ("you are", "you're"),
    ("we are", "we're"),
    ("they are", "they're"),
    ("do not", "don't"),
    ("does not", "doesn't"),
    ("cannot", "can't"),
    ("can not", "can't"),
    ("is not", "isn't"),
    ("are not", "aren't"),
    ("would not", "wouldn't"),
    ("could not", "couldn't"),
    ("it is", "it's"),
    ("that is", "that's"),
    ("what is", "what's"),
    ("where is", "where's"),
    ("how is", "how's"),
    ("let us", "let's"),
    ("i would", "i'd"),
    ("i have", "i've"),
    ("i will", "i'll"),
];

const REQUEST_PREFIXES: &[&str] = &["can you", "could you", "would you", "will you"];
// statements opening with these are not commands and have no request form
const NON_IMPERATIVE_STARTS: &[&str] = &[
    "i", "i'm", "i've", "i'd", "i'll", "my", "me", "we", "it", "it's", "this", "that", "there",
    "is", "are", "am", "was", "what", "what's", "how", "where", "who", "why", "when", "which",
    "do", "does", "did", "can", "could", "would", "will", "should", "the", "a", "an", "you",
    "your", "they", "he", "she", "please",
];
const QUESTION_TEMPLATES: &[&str] = &["can you", "could you"];

/// Which rewrite families are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleSet {
    pub synonyms: bool,
    pub contractions: bool,
    pub questions: bool,
    pub politeness_prefix: bool,
    pub politeness_suffix: bool,
}

impl Default for RuleSet {
    fn default() -> Self {
        Self {
            synonyms: true,
            contractions: true,
            questions: true,
            politeness_prefix: true,
            politeness_suffix: true,
        }
    }
}

impl RuleSet {
    pub fn none() -> Self {
        Self {
            synonyms: false,
            contractions: false,
            questions: false,
            politeness_prefix: false,
            politeness_suffix: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RuleBasedParaphraser {
    lexicon: Lexicon,
    rules: RuleSet,
    max_enumeration: usize,
}

impl RuleBasedParaphraser {
    pub fn new(lexicon: Lexicon, rules: RuleSet) -> Self {
        Self {
            lexicon,
            rules,
            max_enumeration: 4096,
        }
    }

    pub fn with_max_enumeration(mut self, limit: usize) -> Self {
        self.max_enumeration = limit.max(1);
        self
    }

    /// The full candidate set in enumeration order, input excluded.
    pub fn enumerate(&self, text: &str) -> Vec<String> {
        let mut stage = vec![text.trim().to_string()];
        if self.rules.synonyms {
            stage = self.expand(stage, |t| self.synonym_variants(t));
        }
        if self.rules.contractions {
            stage = self.expand(stage, |t| toggle_contractions(t).into_iter().collect());
        }
        if self.rules.questions {
            stage = self.expand(stage, reform_question);
        }
        if self.rules.politeness_prefix || self.rules.politeness_suffix {
            stage = self.expand(stage, |t| self.politeness(t));
        }
        let input = normalize(text);
        stage.retain(|c| normalize(c) != input);
        stage
    }

    fn expand(&self, stage: Vec<String>, family: impl Fn(&str) -> Vec<String>) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        'outer: for text in stage {
            for candidate in std::iter::once(text.clone()).chain(family(&text)) {
                if out.len() >= self.max_enumeration {
                    break 'outer;
                }
                if seen.insert(normalize(&candidate)) {
                    out.push(candidate);
                }
            }
        }
        out
    }

    /// Every combination of lexicon substitutions except the identity.
    fn synonym_variants(&self, text: &str) -> Vec<String> {
        let pieces = segment(text);
        let words: Vec<usize> = (0..pieces.len()).filter(|&i| pieces[i].word).collect();
        let lower: Vec<String> = words.iter().map(|&i| pieces[i].text.to_lowercase()).collect();
        // slots: (first word, word count, alternatives)
        let mut slots: Vec<(usize, usize, &[String])> = Vec::new();
        let mut w = 0;
        while w < words.len() {
            let mut matched = false;
            let max_len = self.lexicon.longest_phrase().min(words.len() - w);
            for len in (1..=max_len).rev() {
                let joined_by_space = (w..w + len - 1)
                    .all(|k| pieces[words[k] + 1].text.chars().all(char::is_whitespace));
                if !joined_by_space {
                    continue;
                }
                if let Some(alts) = self.lexicon.lookup(&lower[w..w + len]) {
                    if !alts.is_empty() {
                        slots.push((w, len, alts));
                        w += len;
                        matched = true;
                        break;
                    }
                }
            }
            if !matched {
                w += 1;
            }
        }
        if slots.is_empty() {
            return Vec::new();
        }
        let radices: Vec<usize> = slots.iter().map(|s| s.2.len() + 1).collect();
        let mut choice = vec![0usize; slots.len()];
        let mut out = Vec::new();
        loop {
            // advance the mixed-radix counter; the all-zero state is the input
            let mut k = slots.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                choice[k] += 1;
                if choice[k] < radices[k] {
                    break;
                }
                choice[k] = 0;
            }
            out.push(render_substitution(&pieces, &words, &slots, &choice));
            if out.len() >= self.max_enumeration {
                return out;
            }
        }
    }

    fn politeness(&self, text: &str) -> Vec<String> {
        if text.split_whitespace().any(|w| normalize(w).trim_matches(|c: char| !c.is_alphanumeric()) == "please") {
            return Vec::new();
        }
        let (core, tail) = split_terminal(text);
        let mut out = Vec::new();
        if self.rules.politeness_prefix {
            out.push(format!("{}{}", with_prefix("please", core), tail));
        }
        if self.rules.politeness_suffix {
            out.push(format!("{core}, please{tail}"));
        }
        out
    }
}

impl ParaphraseBackend for RuleBasedParaphraser {
    fn kind(&self) -> ProviderKind {
        ProviderKind::RuleBased
    }

    fn candidates(&self, text: &str, max_candidates: usize, seed: u64) -> Result<Vec<String>, ProviderError> {
        let mut all = self.enumerate(text);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ text_key(text));
        all.shuffle(&mut rng);
        all.truncate(max_candidates);
        Ok(all)
    }
}

/// Stable 64-bit key of a text's normalized form.
pub(crate) fn text_key(text: &str) -> u64 {
    let digest = Sha256::digest(normalize(text).as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone)]
struct Piece {
    text: String,
    word: bool,
}

/// Alternating word / gap pieces. Words are alphanumeric runs (apostrophes
/// allowed inside); a gap always sits between consecutive words.
fn segment(text: &str) -> Vec<Piece> {
    let mut pieces: Vec<Piece> = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let is_word_char = |j: usize| {
            chars[j].is_alphanumeric()
                || (chars[j] == '\''
                    && j > 0
                    && chars[j - 1].is_alphanumeric()
                    && j + 1 < chars.len()
                    && chars[j + 1].is_alphanumeric())
        };
        let word = is_word_char(i);
        let start = i;
        while i < chars.len() && is_word_char(i) == word {
            i += 1;
        }
        let text: String = chars[start..i].iter().collect();
        if word && pieces.last().is_some_and(|p| p.word) {
            pieces.push(Piece {
                text: String::new(),
                word: false,
            });
        }
        pieces.push(Piece { text, word });
    }
    pieces
}

fn render_substitution(
    pieces: &[Piece],
    words: &[usize],
    slots: &[(usize, usize, &[String])],
    choice: &[usize],
) -> String {
    let mut out = String::new();
    let mut p = 0;
    for (slot, &c) in slots.iter().zip(choice) {
        let (first, len, alts) = *slot;
        let start = words[first];
        let end = words[first + len - 1];
        for piece in &pieces[p..start] {
            out.push_str(&piece.text);
        }
        if c == 0 {
            for piece in &pieces[start..=end] {
                out.push_str(&piece.text);
            }
        } else {
            let capital = pieces[start].text.chars().next().is_some_and(char::is_uppercase);
            out.push_str(&match_case(capital, &alts[c - 1]));
        }
        p = end + 1;
    }
    for piece in &pieces[p..] {
        out.push_str(&piece.text);
    }
    out
}

fn match_case(capital: bool, s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) if capital => first.to_uppercase().chain(chars).collect(),
        _ => s.to_string(),
    }
}

fn lower_first(s: &str) -> String {
    let first_word = s.split_whitespace().next().unwrap_or("");
    let keep = first_word == "I"
        || first_word.starts_with("I'")
        || (first_word.chars().count() > 1 && first_word.chars().all(|c| !c.is_lowercase()));
    let mut chars = s.chars();
    match chars.next() {
        Some(first) if !keep => first.to_lowercase().chain(chars).collect(),
        _ => s.to_string(),
    }
}

fn with_prefix(prefix: &str, core: &str) -> String {
    let capital = core.chars().next().is_some_and(char::is_uppercase);
    format!("{} {}", match_case(capital, prefix), lower_first(core))
}

/// Splits trailing sentence punctuation from the text.
fn split_terminal(text: &str) -> (&str, &str) {
    let trimmed = text.trim_end();
    let core = trimmed.trim_end_matches(['.', '!', '?']);
    (core.trim_end(), &trimmed[core.len()..])
}

/// Contracts every expandable pair and expands every contraction; returns
/// `None` when nothing applies.
fn toggle_contractions(text: &str) -> Option<String> {
    let pieces = segment(text);
    let words: Vec<usize> = (0..pieces.len()).filter(|&i| pieces[i].word).collect();
    let mut out = String::new();
    let mut changed = false;
    let mut p = 0;
    let mut w = 0;
    while w < words.len() {
        let lower = pieces[words[w]].text.to_lowercase();
        let capital = pieces[words[w]].text.chars().next().is_some_and(char::is_uppercase);
        let mut replaced: Option<(usize, String)> = None;
        if w + 1 < words.len() && pieces[words[w] + 1].text == " " {
            let pair = format!("{} {}", lower, pieces[words[w + 1]].text.to_lowercase());
            if let Some((_, short)) = CONTRACTIONS.iter().find(|(long, _)| *long == pair) {
                replaced = Some((2, short.to_string()));
            }
        }
        if replaced.is_none() {
            if let Some((long, short)) = CONTRACTIONS.iter().find(|(long, short)| *short == lower || *long == lower) {
                let target = if *short == lower { long } else { short };
                replaced = Some((1, target.to_string()));
            }
        }
        match replaced {
            Some((len, target)) => {
                for piece in &pieces[p..words[w]] {
                    out.push_str(&piece.text);
                }
                let target = if lower == "i" || target.starts_with("i ") || target.starts_with("i'") {
                    capitalize_i(&target)
                } else {
                    target
                };
                out.push_str(&match_case(capital, &target));
                p = words[w + len - 1] + 1;
                w += len;
                changed = true;
            }
            None => w += 1,
        }
    }
    for piece in &pieces[p..] {
        out.push_str(&piece.text);
    }
    changed.then_some(out)
}

fn capitalize_i(s: &str) -> String {
    if let Some(rest) = s.strip_prefix('i') {
        format!("I{rest}")
    } else {
        s.to_string()
    }
}

/// Request questions become imperatives; plain statements become requests.
fn reform_question(text: &str) -> Vec<String> {
    let (core, tail) = split_terminal(text);
    let lower = normalize(core);
    for prefix in REQUEST_PREFIXES {
        if let Some(rest) = lower.strip_prefix(prefix).and_then(|r| r.strip_prefix(' ')) {
            if rest.is_empty() {
                return Vec::new();
            }
            // keep the original casing of the remainder
            let offset = core.len() - core.trim_start().len();
            let words_in_prefix = prefix.split(' ').count();
            let remainder = core[offset..]
                .splitn(words_in_prefix + 1, char::is_whitespace)
                .nth(words_in_prefix)
                .unwrap_or(rest)
                .trim_start();
            let capital = core.trim_start().chars().next().is_some_and(char::is_uppercase);
            return vec![match_case(capital, remainder)];
        }
    }
    let first = lower.split(' ').next().unwrap_or("");
    if tail.contains('?') || core.is_empty() || NON_IMPERATIVE_STARTS.contains(&first) {
        return Vec::new();
    }
    QUESTION_TEMPLATES
        .iter()
        .map(|t| format!("{}?", with_prefix(t, core)))
        .collect()
}
