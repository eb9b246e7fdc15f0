//! Text normalization and word-level tokenization shared by every stage.

/// Placeholder token substituted for occluded words. The tokenizer never
/// produces it (brackets are boundaries), so every vocabulary maps it to UNK.
pub const UNK_TOKEN: &str = "[UNK]";

/// Equality key used for deduplication: lowercase, internal whitespace
/// collapsed, leading and trailing whitespace removed.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Lowercased word tokens. Splits on whitespace and punctuation; an apostrophe
/// inside a word is kept so contractions stay whole ("i'm", "don't").
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || (ch == '\'' || ch == '\u{2019}') && !current.is_empty() {
            if ch == '\u{2019}' {
                current.push('\'');
            } else {
                current.extend(ch.to_lowercase());
            }
        } else if !current.is_empty() {
            flush(&mut current, &mut tokens);
        }
    }
    flush(&mut current, &mut tokens);
    tokens
}

fn flush(current: &mut String, tokens: &mut Vec<String>) {
    let trimmed = current.trim_end_matches('\'');
    if !trimmed.is_empty() {
        tokens.push(trimmed.to_string());
    }
    current.clear();
}

/// True when the text holds at least one alphanumeric character.
pub fn has_content(text: &str) -> bool {
    text.chars().any(char::is_alphanumeric)
}
