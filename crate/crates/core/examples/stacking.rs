//! Stack several base classifiers under a logistic-regression meta model
//! fitted on out-of-fold predictions.

use ciai::config::Config;
use ciai::corpus::stratified_split;
use ciai::demo::demo_corpus;
use ciai::ensemble::build_prediction_matrix;
use ciai::pipeline::{fit_stack, BaseSpec};

fn main() -> anyhow::Result<()> {
    let config = Config::default().with_seed(0);
    let split = stratified_split(&demo_corpus(), config.split.train_fraction, 0)?;
    let specs: Vec<BaseSpec> = ["nb=multinomial_nb", "bnb=bernoulli_nb", "lr=logistic_regression", "forest=random_forest"]
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()?;

    let outcome = fit_stack(&specs, &split.train, &config)?;
    let valid = build_prediction_matrix(&outcome.ensemble.base, &split.validation)?;
    println!("{:<10} {:>10} {:>10}", "model", "oof", "valid");
    for (j, name) in valid.models.iter().enumerate() {
        println!("{name:<10} {:>10.4} {:>10.4}", outcome.meta_training.column_accuracy(j), valid.column_accuracy(j));
    }
    let meta = &outcome.ensemble.meta;
    println!("{:<10} {:>10.4} {:>10.4}", "meta", meta.accuracy(&outcome.meta_training)?, meta.accuracy(&valid)?);
    Ok(())
}
