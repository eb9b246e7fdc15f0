//! Load the bundled demo corpus, validate it and make a stratified split.
//!
//! ```sh
//! cargo run --example corpus_split
//! ```

use ciai::corpus::{stratified_split, validate_corpus};
use ciai::demo::demo_corpus;

fn main() -> anyhow::Result<()> {
    let corpus = demo_corpus();
    let report = validate_corpus(&corpus);
    println!("{} utterances, clean: {}", corpus.len(), report.is_clean());

    let split = stratified_split(&corpus, 0.7, 42)?;
    println!("{:<22} {:>6} {:>6}", "label", "train", "valid");
    let (train, valid) = (split.train.class_counts(), split.validation.class_counts());
    for (i, label) in corpus.registry().labels().iter().enumerate() {
        println!("{:<22} {:>6} {:>6}", label, train[i], valid[i]);
    }
    println!("train hash {}", &split.train.content_hash()[..16]);
    Ok(())
}
