//! Rule-based paraphrasing and per-class balancing of a training split.

use std::num::NonZeroUsize;

use ciai::augment::{augment, Lexicon, ParaphraseProvider, RuleBasedParaphraser, RuleSet};
use ciai::corpus::stratified_split;
use ciai::demo::demo_corpus;

fn main() -> anyhow::Result<()> {
    let provider = ParaphraseProvider::rule_based(
        RuleBasedParaphraser::new(Lexicon::builtin(), RuleSet::default()),
        NonZeroUsize::new(20).unwrap(),
        7,
    );
    for p in provider.paraphrase("can you tell me a funny joke")?.iter().take(5) {
        println!("  {p}");
    }

    let split = stratified_split(&demo_corpus(), 0.7, 7)?;
    let augmented = augment(&split.train, &provider)?;
    let manifest = augmented.manifest(&provider);
    println!("balance target {} per class", augmented.balance_target);
    println!("{}", serde_json::to_string_pretty(&manifest)?);
    Ok(())
}
