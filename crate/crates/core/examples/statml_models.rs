//! Bag-of-words statistical classifiers side by side.

use ciai::classifier::BowClassifier;
use ciai::corpus::stratified_split;
use ciai::demo::demo_corpus;
use ciai::eval::evaluate;
use ciai::statml::{StatKind, StatParams};

fn main() -> anyhow::Result<()> {
    let split = stratified_split(&demo_corpus(), 0.7, 3)?;
    let params = StatParams {
        seed: 3,
        ..StatParams::default()
    };
    println!("{:<20} {:>8} {:>8}", "model", "acc", "macroF1");
    for kind in StatKind::ALL {
        let model = BowClassifier::fit(&split.train, kind, &params, 1)?;
        let r = evaluate(&model, &split.validation)?;
        println!("{:<20} {:>8.3} {:>8.3}", kind, r.accuracy, r.macro_f1);
    }
    Ok(())
}
