//! Metrics report, confusion matrix, run comparison and the
//! highest-loss validation errors.

use ciai::classifier::BowClassifier;
use ciai::corpus::stratified_split;
use ciai::demo::demo_corpus;
use ciai::eval::{compare_runs, errors_to_text, evaluate, worst_errors, DEFAULT_LOSS_THRESHOLD};
use ciai::statml::{StatKind, StatParams};

fn main() -> anyhow::Result<()> {
    let split = stratified_split(&demo_corpus(), 0.7, 5)?;
    let params = StatParams::default();
    let nb = BowClassifier::fit(&split.train, StatKind::MultinomialNb, &params, 1)?;
    let bnb = BowClassifier::fit(&split.train, StatKind::BernoulliNb, &params, 1)?;

    let a = evaluate(&bnb, &split.validation)?;
    let b = evaluate(&nb, &split.validation)?;
    print!("{}", b.to_text());
    print!("{}", b.confusion.to_text());
    println!("\nmultinomial vs bernoulli:");
    print!("{}", compare_runs(&a, &b)?.to_text());

    let errors = worst_errors(&nb, &split.validation, DEFAULT_LOSS_THRESHOLD)?;
    println!();
    print!("{}", errors_to_text(split.validation.registry(), &errors));
    Ok(())
}
