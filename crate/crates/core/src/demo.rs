//! Bundled demo data: 483 human-written commands over the seven standard
//! task classes.

use crate::corpus::{parse_jsonl, Corpus, LabelRegistry};

pub const DEMO_CORPUS_JSONL: &str = include_str!("../data/demo_corpus.jsonl");

pub fn demo_corpus() -> Corpus {
    parse_jsonl(DEMO_CORPUS_JSONL, Some(&LabelRegistry::standard()))
        .expect("bundled corpus is valid")
        .corpus
}
