mod common;

use std::sync::Arc;

use ciai::classifier::{classifier_from_checkpoint, TextClassifier};
use ciai::corpus::{stratified_split, LabelRegistry};
use ciai::demo::demo_corpus;
use ciai::ensemble::{
    build_prediction_matrix, ensemble_predict, fit_meta, out_of_fold_prediction_matrix, rank_predictors_cv, BaseModelSet,
    EnsembleError, MetaOptions, PredictionMatrix, StackingEnsemble,
};
use ciai::statml::StatKind;
use ciai::classifier::BowClassifier;
use ciai::statml::StatParams;

fn matrix(truth: Vec<usize>, columns: Vec<Vec<usize>>) -> PredictionMatrix {
    let rows = truth.len();
    PredictionMatrix {
        labels: LabelRegistry::standard(),
        models: (0..columns.len()).map(|j| format!("m{j}")).collect(),
        sample_ids: (0..rows).map(|i| format!("r{i:03}")).collect(),
        cells: (0..rows).map(|i| columns.iter().map(|c| c[i]).collect()).collect(),
        truth,
        probabilities: None,
    }
}

#[test]
fn unanimous_correct_bases_give_a_perfect_meta() {
    let truth: Vec<usize> = (0..70).map(|i| i % 7).collect();
    let m = matrix(truth.clone(), vec![truth.clone(), truth.clone(), truth.clone()]);
    let meta = fit_meta(&m, &MetaOptions::default()).unwrap();
    assert_eq!(meta.predict_matrix(&m).unwrap(), truth);
    assert_eq!(meta.accuracy(&m).unwrap(), 1.0);
}

#[test]
fn meta_learns_a_consistent_relabeling() {
    // The only base is always off by one class; the meta should undo it.
    let truth: Vec<usize> = (0..140).map(|i| i % 7).collect();
    let shifted: Vec<usize> = truth.iter().map(|t| (t + 1) % 7).collect();
    let noise: Vec<usize> = (0..140).map(|i| (i * 3) % 7).collect();
    let m = matrix(truth, vec![shifted, noise]);
    assert_eq!(m.column_accuracy(0), 0.0);
    assert_eq!(fit_meta(&m, &MetaOptions::default()).unwrap().accuracy(&m).unwrap(), 1.0);
}

#[test]
fn duplicate_models_rank_identically() {
    let corpus = demo_corpus();
    let nb: Arc<dyn TextClassifier> = Arc::new(common::naive_bayes());
    let set = BaseModelSet::new(vec![("a".into(), nb.clone()), ("b".into(), nb)]).unwrap();
    let m = build_prediction_matrix(&set, &corpus).unwrap();
    assert_eq!(m.column(0), m.column(1));
    let r = rank_predictors_cv(&m, 5, 3).unwrap();
    assert_eq!(r.scores[0].mean_information_gain, r.scores[1].mean_information_gain);
    // Equal gains are ordered by name.
    assert_eq!((r.scores[0].mean_rank, r.scores[1].mean_rank), (1.0, 2.0));
    let meta = fit_meta(&m, &MetaOptions::default()).unwrap();
    assert!(meta.accuracy(&m).unwrap() >= m.column_accuracy(0) - 1e-12);
}

#[test]
fn base_model_set_preconditions() {
    let nb: Arc<dyn TextClassifier> = Arc::new(common::naive_bayes());
    assert!(matches!(
        BaseModelSet::new(vec![("only".into(), nb.clone())]),
        Err(EnsembleError::TooFewModels(_))
    ));
    assert!(matches!(
        BaseModelSet::new(vec![("x".into(), nb.clone()), ("x".into(), nb.clone())]),
        Err(EnsembleError::DuplicateName(_))
    ));
    let other = common::Scripted {
        labels: LabelRegistry::from_names(&["CHAT", "JOKE"]).unwrap(),
        rows: Default::default(),
    };
    assert!(matches!(
        BaseModelSet::new(vec![("x".into(), nb), ("y".into(), Arc::new(other))]),
        Err(EnsembleError::RegistryMismatch(_))
    ));
}

#[test]
fn out_of_fold_rows_follow_corpus_order_and_never_see_their_fold() {
    let split = stratified_split(&demo_corpus(), 0.7, 1).unwrap();
    let fit = |train: &ciai::corpus::Corpus| {
        let nb: Arc<dyn TextClassifier> =
            Arc::new(BowClassifier::fit(train, StatKind::MultinomialNb, &StatParams::default(), 1).unwrap());
        let bnb: Arc<dyn TextClassifier> =
            Arc::new(BowClassifier::fit(train, StatKind::BernoulliNb, &StatParams::default(), 1).unwrap());
        BaseModelSet::new(vec![("nb".into(), nb), ("bnb".into(), bnb)])
    };
    let oof = out_of_fold_prediction_matrix(&split.train, 4, 9, fit).unwrap();
    let ids: Vec<String> = split.train.iter().map(|u| u.id.clone()).collect();
    assert_eq!(oof.sample_ids, ids);
    assert_eq!(oof.truth, split.train.label_indices());
    let in_sample = build_prediction_matrix(&fit(&split.train).unwrap(), &split.train).unwrap();
    assert!(oof.column_accuracy(0) <= in_sample.column_accuracy(0));
    assert!(matches!(
        out_of_fold_prediction_matrix(&split.train, 1, 9, fit),
        Err(EnsembleError::Folds { .. })
    ));
}

#[test]
fn stacking_ensemble_round_trips_through_checkpoint() {
    let corpus = demo_corpus();
    let nb: Arc<dyn TextClassifier> = Arc::new(common::naive_bayes());
    let bnb: Arc<dyn TextClassifier> =
        Arc::new(BowClassifier::fit(&corpus, StatKind::BernoulliNb, &StatParams::default(), 1).unwrap());
    let set = BaseModelSet::new(vec![("nb".into(), nb), ("bnb".into(), bnb)]).unwrap();
    let m = build_prediction_matrix(&set, &corpus).unwrap();
    let meta = fit_meta(&m, &MetaOptions::default()).unwrap();
    let (k, p) = ensemble_predict(&set, &meta, "tell me a joke").unwrap();
    assert_eq!(corpus.registry().label(k).as_str(), "JOKE");
    let ens = StackingEnsemble::new(set, meta).unwrap();
    assert_eq!(ens.predict_proba("tell me a joke").unwrap(), p);
    let back = classifier_from_checkpoint(&ens.to_checkpoint().unwrap()).unwrap();
    assert_eq!(back.predict_proba("tell me a joke").unwrap(), p);
    assert_eq!(back.fingerprint().unwrap(), ens.fingerprint().unwrap());
}
