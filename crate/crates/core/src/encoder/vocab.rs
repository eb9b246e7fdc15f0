use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::EncoderError;
use crate::text::tokenize;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = crate::text::UNK_TOKEN;

/// Word-level vocabulary. PAD is index 0, UNK index 1; the remaining tokens
/// are ordered by (frequency descending, token ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    frequencies: Vec<usize>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_frequency: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for token in tokenize(text) {
                *counts.entry(token).or_default() += 1;
            }
        }
        let mut entries: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_frequency.max(1))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let specials = [(PAD_TOKEN.to_string(), 0), (UNK_TOKEN.to_string(), 0)];
        Self::from_entries(specials.into_iter().chain(entries))
    }

    fn from_entries(entries: impl IntoIterator<Item = (String, usize)>) -> Self {
        let (tokens, frequencies): (Vec<String>, Vec<usize>) = entries.into_iter().unzip();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            tokens,
            frequencies,
            index,
        }
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

    pub fn frequency(&self, index: usize) -> usize {
        self.frequencies[index]
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn lookup(&self, token: &str) -> usize {
        match self.index.get(token) {
            Some(&i) if i != PAD => i,
            _ => UNK,
        }
    }

    /// Encodes `text` to exactly `max_len` positions: truncated, then
    /// right-padded with PAD.
    pub fn encode(&self, text: &str, max_len: usize) -> Result<TokenSequence, EncoderError> {
        self.encode_tokens(&tokenize(text), max_len)
    }

    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S], max_len: usize) -> Result<TokenSequence, EncoderError> {
        if tokens.is_empty() || max_len == 0 {
            return Err(EncoderError::EmptySequence);
        }
        let mut indices: Vec<usize> = tokens.iter().take(max_len).map(|t| self.lookup(t.as_ref())).collect();
        indices.resize(max_len, PAD);
        TokenSequence::new(indices)
    }

    /// One `token<TAB>frequency` line per entry; the line number is the index.
    pub fn write(&self, mut writer: impl Write) -> std::io::Result<()> {
        for (t, f) in self.tokens.iter().zip(&self.frequencies) {
            writeln!(writer, "{t}\t{f}")?;
        }
        Ok(())
    }

    pub fn read(reader: impl BufRead) -> Result<Self, EncoderError> {
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| EncoderError::Vocabulary(e.to_string()))?;
            let (token, freq) = line
                .rsplit_once('\t')
                .ok_or_else(|| EncoderError::Vocabulary(format!("line {}: missing tab", i + 1)))?;
            let freq = freq
                .parse()
                .map_err(|_| EncoderError::Vocabulary(format!("line {}: bad frequency", i + 1)))?;
            entries.push((token.to_string(), freq));
        }
        Self::from_parts(entries)
    }

    pub(crate) fn from_parts(entries: Vec<(String, usize)>) -> Result<Self, EncoderError> {
        if entries.len() < 2 || entries[PAD].0 != PAD_TOKEN || entries[UNK].0 != UNK_TOKEN {
            return Err(EncoderError::Vocabulary("first two entries must be [PAD] and [UNK]".into()));
        }
        let vocab = Self::from_entries(entries);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(EncoderError::Vocabulary("duplicate token".into()));
        }
        Ok(vocab)
    }

    pub(crate) fn entries(&self) -> Vec<(String, usize)> {
        self.tokens.iter().cloned().zip(self.frequencies.iter().copied()).collect()
    }
}

/// Token indices with their attention mask (`true` = real token).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    indices: Vec<usize>,
    mask: Vec<bool>,
}

impl TokenSequence {
    /// The mask is derived from the indices: PAD positions are masked.
    pub fn new(indices: Vec<usize>) -> Result<Self, EncoderError> {
        let mask: Vec<bool> = indices.iter().map(|&i| i != PAD).collect();
        if !mask.iter().any(|&m| m) {
            return Err(EncoderError::EmptySequence);
        }
        Ok(Self { indices, mask })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// (token index, position) of every unmasked position.
    pub(crate) fn active(&self) -> Vec<(usize, usize)> {
        self.indices
            .iter()
            .enumerate()
            .filter(|(_, &t)| t != PAD)
            .map(|(pos, &t)| (t, pos))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sentence_vocabulary() {
        let v = Vocabulary::build(["tell me a joke"], 1);
        assert_eq!(v.tokens(), ["[PAD]", "[UNK]", "a", "joke", "me", "tell"]);
    }

    #[test]
    fn min_frequency_threshold() {
        let v = Vocabulary::build(["tell me", "show me", "give me"], 2);
        assert_eq!(v.tokens(), ["[PAD]", "[UNK]", "me"]);
        assert_eq!(v.frequency(2), 3);
    }

    #[test]
    fn encode_pads_and_masks() {
        let v = Vocabulary::build(["tell me a joke"], 1);
        let seq = v.encode("tell me a joke", 6).unwrap();
        let want: Vec<usize> = ["tell", "me", "a", "joke"].iter().map(|t| v.lookup(t)).chain([PAD, PAD]).collect();
        assert_eq!(seq.indices(), want.as_slice());
        assert_eq!(seq.mask(), [true, true, true, true, false, false]);
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let v = Vocabulary::build(["tell me a joke"], 1);
        let seq = v.encode("tell me a riddle", 4).unwrap();
        assert_eq!(seq.indices()[3], UNK);
        assert_eq!(v.lookup(PAD_TOKEN), UNK);
        assert_eq!(v.lookup(UNK_TOKEN), UNK);
    }

    #[test]
    fn truncates_long_input() {
        let text: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        let v = Vocabulary::build([text.join(" ").as_str()], 1);
        let seq = v.encode(&text.join(" "), 32).unwrap();
        assert_eq!(seq.len(), 32);
        assert!(seq.mask().iter().all(|&m| m));
    }

    #[test]
    fn empty_text_is_rejected() {
        let v = Vocabulary::build(["hi"], 1);
        assert!(matches!(v.encode("?!", 8), Err(EncoderError::EmptySequence)));
        assert!(matches!(TokenSequence::new(vec![PAD, PAD]), Err(EncoderError::EmptySequence)));
    }

    #[test]
    fn file_round_trip() {
        let v = Vocabulary::build(["tell me a joke", "tell me more"], 1);
        let mut buf = Vec::new();
        v.write(&mut buf).unwrap();
        assert_eq!(Vocabulary::read(buf.as_slice()).unwrap(), v);
    }
}
