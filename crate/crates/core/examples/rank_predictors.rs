//! Rank base models by cross-validated information gain of their
//! predictions about the true label.

use std::sync::Arc;

use ciai::classifier::{BowClassifier, TextClassifier};
use ciai::demo::demo_corpus;
use ciai::ensemble::{build_prediction_matrix, rank_predictors_cv, BaseModelSet};
use ciai::statml::{entropy, StatKind, StatParams};

fn main() -> anyhow::Result<()> {
    let corpus = demo_corpus();
    let mut members: Vec<(String, Arc<dyn TextClassifier>)> = Vec::new();
    for kind in [StatKind::MultinomialNb, StatKind::BernoulliNb, StatKind::GaussianNb] {
        members.push((kind.to_string(), Arc::new(BowClassifier::fit(&corpus, kind, &StatParams::default(), 1)?)));
    }
    let matrix = build_prediction_matrix(&BaseModelSet::new(members)?, &corpus)?;
    println!("label entropy {:.3} bits", entropy(&matrix.truth)?);

    let ranking = rank_predictors_cv(&matrix, 10, 0)?;
    for s in ranking.ranked() {
        println!(
            "{:<16} IG {:.3} ± {:.3}  rank {:.1} ± {:.1}",
            s.name, s.mean_information_gain, s.std_information_gain, s.mean_rank, s.std_rank
        );
    }
    Ok(())
}
