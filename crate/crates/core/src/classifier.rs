//! Common interface over every model that maps text to class probabilities.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::corpus::{Corpus, LabelRegistry};
use crate::encoder::{AttentionClassifier, EncoderError, Vocabulary, PAD, UNK};
use crate::statml::{self, ColumnKind, FeatureMatrix, FittedModel, StatError, StatKind, StatParams};
use crate::text::tokenize;

pub const BOW_CHECKPOINT_KIND: &str = "bow";

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("text contains no tokens")]
    EmptyInput,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    Model(String),
}

/// A trained text classifier with a fixed label registry.
pub trait TextClassifier: Send + Sync {
    fn labels(&self) -> &LabelRegistry;

    /// Probabilities for an already tokenized text, in registry order.
    fn predict_tokens(&self, tokens: &[String]) -> Result<Vec<f64>, ClassifierError>;

    fn predict_proba(&self, text: &str) -> Result<Vec<f64>, ClassifierError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(ClassifierError::EmptyInput);
        }
        self.predict_tokens(&tokens)
    }

    fn to_checkpoint(&self) -> Result<Checkpoint, ClassifierError>;

    /// Hex SHA-256 of the serialized model.
    fn fingerprint(&self) -> Result<String, ClassifierError> {
        Ok(self.to_checkpoint()?.content_hash())
    }
}

impl TextClassifier for AttentionClassifier {
    fn labels(&self) -> &LabelRegistry {
        AttentionClassifier::labels(self)
    }

    fn predict_tokens(&self, tokens: &[String]) -> Result<Vec<f64>, ClassifierError> {
        if tokens.is_empty() {
            return Err(ClassifierError::EmptyInput);
        }
        let seq = self.vocab().encode_tokens(tokens, self.config().max_len)?;
        Ok(self.forward(&seq)?)
    }

    fn to_checkpoint(&self) -> Result<Checkpoint, ClassifierError> {
        Ok(AttentionClassifier::to_checkpoint(self)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BowHeader {
    labels: Vec<String>,
    vocabulary: Vec<(String, usize)>,
    binary: bool,
}

/// Bag-of-words statistical text classifier: word counts (or presence
/// flags) fed to a [`statml`] model.
#[derive(Debug, Clone)]
pub struct BowClassifier {
    vocab: Vocabulary,
    labels: LabelRegistry,
    binary: bool,
    model: FittedModel,
}

impl BowClassifier {
    /// Binary presence features are used for Bernoulli naive Bayes, counts
    /// otherwise.
    pub fn fit(corpus: &Corpus, kind: StatKind, params: &StatParams, min_frequency: usize) -> Result<Self, ClassifierError> {
        let vocab = Vocabulary::build(corpus.iter().map(|u| u.text.as_str()), min_frequency);
        let binary = kind == StatKind::BernoulliNb;
        let rows: Vec<Vec<f64>> = corpus
            .iter()
            .map(|u| bow_features(&vocab, binary, &tokenize(&u.text)))
            .collect();
        let column = if binary { ColumnKind::Binary } else { ColumnKind::Count };
        let x = FeatureMatrix::from_rows(&rows, vec![column; vocab.len() - 2])?;
        let labels = corpus.registry().clone();
        let model = statml::fit(kind, &x, &corpus.label_indices(), labels.len(), params)?;
        Ok(Self {
            vocab,
            labels,
            binary,
            model,
        })
    }

    pub fn kind(&self) -> StatKind {
        self.model.kind()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ClassifierError> {
        ck.expect_kind(BOW_CHECKPOINT_KIND)?;
        let h: BowHeader = ck.header_as()?;
        let labels = LabelRegistry::from_names(&h.labels).map_err(|e| ClassifierError::Model(e.to_string()))?;
        Ok(Self {
            vocab: Vocabulary::from_parts(h.vocabulary)?,
            labels,
            binary: h.binary,
            model: FittedModel::from_checkpoint(ck.child("model")?)?,
        })
    }
}

impl TextClassifier for BowClassifier {
    fn labels(&self) -> &LabelRegistry {
        &self.labels
    }

    fn predict_tokens(&self, tokens: &[String]) -> Result<Vec<f64>, ClassifierError> {
        if tokens.is_empty() {
            return Err(ClassifierError::EmptyInput);
        }
        Ok(statml::Classifier::predict_proba_row(&self.model, &bow_features(&self.vocab, self.binary, tokens)))
    }

    fn to_checkpoint(&self) -> Result<Checkpoint, ClassifierError> {
        let header = BowHeader {
            labels: self.labels.labels().iter().map(|l| l.to_string()).collect(),
            vocabulary: self.vocab.entries(),
            binary: self.binary,
        };
        Ok(Checkpoint::new(BOW_CHECKPOINT_KIND, &header)?.with_child("model", self.model.to_checkpoint()?))
    }
}

fn bow_features(vocab: &Vocabulary, binary: bool, tokens: &[String]) -> Vec<f64> {
    let mut row = vec![0.0; vocab.len() - 2];
    for t in tokens {
        let i = vocab.lookup(t);
        if i != UNK && i != PAD {
            let slot = &mut row[i - 2];
            *slot = if binary { 1.0 } else { *slot + 1.0 };
        }
    }
    row
}

/// Loads any text classifier checkpoint, dispatching on its kind tag.
pub fn classifier_from_checkpoint(ck: &Checkpoint) -> Result<Box<dyn TextClassifier>, ClassifierError> {
    match ck.kind.as_str() {
        crate::encoder::CHECKPOINT_KIND => Ok(Box::new(AttentionClassifier::from_checkpoint(ck)?)),
        BOW_CHECKPOINT_KIND => Ok(Box::new(BowClassifier::from_checkpoint(ck)?)),
        crate::ensemble::CHECKPOINT_KIND => Ok(Box::new(crate::ensemble::StackingEnsemble::from_checkpoint(ck)?)),
        other => Err(ClassifierError::Model(format!("{other} checkpoints are not text classifiers"))),
    }
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<Box<dyn TextClassifier>, ClassifierError> {
    classifier_from_checkpoint(&Checkpoint::load(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::demo_corpus;

    #[test]
    fn bow_models_fit_demo_corpus() {
        let corpus = demo_corpus();
        for kind in [StatKind::MultinomialNb, StatKind::BernoulliNb] {
            let m = BowClassifier::fit(&corpus, kind, &StatParams::default(), 1).unwrap();
            let p = m.predict_proba("tell me a joke").unwrap();
            assert_eq!(m.labels().label(crate::encoder::tensor::argmax(&p)).as_str(), "JOKE");
            let back = classifier_from_checkpoint(&m.to_checkpoint().unwrap()).unwrap();
            assert_eq!(back.predict_proba("tell me a joke").unwrap(), p);
        }
    }

    #[test]
    fn empty_text_is_rejected() {
        let m = BowClassifier::fit(&demo_corpus(), StatKind::MultinomialNb, &StatParams::default(), 1).unwrap();
        assert!(matches!(m.predict_proba("?!"), Err(ClassifierError::EmptyInput)));
    }
}
