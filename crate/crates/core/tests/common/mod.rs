#![allow(dead_code)]

use std::collections::BTreeMap;

use ciai::checkpoint::Checkpoint;
use ciai::classifier::{BowClassifier, ClassifierError, TextClassifier};
use ciai::corpus::{LabelRegistry, TaskLabel};
use ciai::demo::demo_corpus;
use ciai::statml::{StatKind, StatParams};

/// Row that the router must turn into a clarification under defaults.
pub fn ambiguous_row() -> Vec<f64> {
    row(&[("EEG-EMOTIONS", 0.672), ("SENTIMENT-ANALYSIS", 0.32), ("CHAT", 0.004), ("JOKE", 0.004)])
}

pub fn row(pairs: &[(&str, f64)]) -> Vec<f64> {
    let labels = LabelRegistry::standard();
    let mut row = vec![0.0; labels.len()];
    for (l, p) in pairs {
        row[labels.index_of(&TaskLabel::new(l).unwrap()).unwrap()] = *p;
    }
    row
}

/// Maps the joined token string to a fixed probability row; anything else
/// is confidently CHAT.
pub struct Scripted {
    pub labels: LabelRegistry,
    pub rows: BTreeMap<String, Vec<f64>>,
}

impl Scripted {
    pub fn new(rows: &[(&str, Vec<f64>)]) -> Self {
        Self {
            labels: LabelRegistry::standard(),
            rows: rows.iter().map(|(t, r)| (t.to_string(), r.clone())).collect(),
        }
    }
}

impl TextClassifier for Scripted {
    fn labels(&self) -> &LabelRegistry {
        &self.labels
    }

    fn predict_tokens(&self, tokens: &[String]) -> Result<Vec<f64>, ClassifierError> {
        if tokens.is_empty() {
            return Err(ClassifierError::EmptyInput);
        }
        Ok(self.rows.get(&tokens.join(" ")).cloned().unwrap_or_else(|| row(&[("CHAT", 1.0)])))
    }

    fn to_checkpoint(&self) -> Result<Checkpoint, ClassifierError> {
        Ok(Checkpoint::new("scripted", &self.rows.keys().collect::<Vec<_>>())?)
    }
}

pub fn naive_bayes() -> BowClassifier {
    BowClassifier::fit(&demo_corpus(), StatKind::MultinomialNb, &StatParams::default(), 1).unwrap()
}
