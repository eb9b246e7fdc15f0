//! End-to-end helpers shared by the binary, the examples and the tests:
//! fitting a named model kind, building base model sets and stacking them.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{augment, AugmentError};
use crate::classifier::{BowClassifier, ClassifierError, TextClassifier};
use crate::config::{Config, ConfigError};
use crate::corpus::Corpus;
use crate::encoder::{train, AttentionClassifier, EncoderError, Vocabulary};
use crate::ensemble::{build_prediction_matrix, fit_meta, out_of_fold_prediction_matrix, BaseModelSet, EnsembleError, PredictionMatrix, StackingEnsemble};
use crate::statml::StatKind;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown model kind {0:?}")]
    UnknownKind(String),
    #[error("base model spec {0:?} is not of the form name=kind")]
    BadSpec(String),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Every trainable text model kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ModelKind {
    /// Attention encoder trained on the corpus as given.
    Attention,
    /// Attention encoder trained on the paraphrase-augmented, balanced corpus.
    AugmentedAttention,
    /// Bag-of-words features into a statistical model.
    Bow(StatKind),
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Attention => f.write_str("attention"),
            ModelKind::AugmentedAttention => f.write_str("augmented_attention"),
            ModelKind::Bow(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for ModelKind {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(ModelKind::Attention),
            "augmented_attention" => Ok(ModelKind::AugmentedAttention),
            other => other
                .parse::<StatKind>()
                .map(ModelKind::Bow)
                .map_err(|_| PipelineError::UnknownKind(other.to_string())),
        }
    }
}

impl From<ModelKind> for String {
    fn from(k: ModelKind) -> Self {
        k.to_string()
    }
}

impl TryFrom<String> for ModelKind {
    type Error = PipelineError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// A named base model kind, written `name=kind` on the command line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseSpec {
    pub name: String,
    pub kind: ModelKind,
}

impl FromStr for BaseSpec {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self> {
        let (name, kind) = s.split_once('=').ok_or_else(|| PipelineError::BadSpec(s.to_string()))?;
        if name.trim().is_empty() {
            return Err(PipelineError::BadSpec(s.to_string()));
        }
        Ok(Self {
            name: name.trim().to_string(),
            kind: kind.trim().parse()?,
        })
    }
}

/// A default diverse set: augmented attention plus four bag-of-words models.
pub fn default_base_specs() -> Vec<BaseSpec> {
    let mut specs = vec![BaseSpec {
        name: "attention".into(),
        kind: ModelKind::AugmentedAttention,
    }];
    for k in [StatKind::MultinomialNb, StatKind::BernoulliNb, StatKind::LogisticRegression, StatKind::RandomForest] {
        specs.push(BaseSpec {
            name: k.to_string(),
            kind: ModelKind::Bow(k),
        });
    }
    specs
}

/// Trains an attention encoder with the configured architecture and schedule.
pub fn fit_attention(train_set: &Corpus, config: &Config) -> Result<AttentionClassifier> {
    let vocab = Vocabulary::build(train_set.iter().map(|u| u.text.as_str()), 1);
    let model = AttentionClassifier::new(config.encoder.clone(), vocab, train_set.registry().clone())?;
    Ok(train(model, train_set, &config.training)?.model)
}

pub fn fit_model(kind: ModelKind, train_set: &Corpus, config: &Config) -> Result<Box<dyn TextClassifier>> {
    Ok(match kind {
        ModelKind::Attention => Box::new(fit_attention(train_set, config)?),
        ModelKind::AugmentedAttention => {
            let provider = config.augment.provider(config.seed)?;
            let augmented = augment(train_set, &provider)?;
            Box::new(fit_attention(&augmented.corpus, config)?)
        }
        ModelKind::Bow(k) => Box::new(BowClassifier::fit(train_set, k, &config.stat, 1)?),
    })
}

pub fn fit_base_models(specs: &[BaseSpec], train_set: &Corpus, config: &Config) -> Result<BaseModelSet> {
    let members = specs
        .iter()
        .map(|s| Ok((s.name.clone(), Arc::from(fit_model(s.kind, train_set, config)?))))
        .collect::<Result<Vec<_>>>()?;
    Ok(BaseModelSet::new(members)?)
}

/// A fitted stack plus the matrices it was built from.
pub struct StackOutcome {
    pub ensemble: StackingEnsemble,
    /// Out-of-fold predictions the meta-classifier was fitted on.
    pub meta_training: PredictionMatrix,
    /// Predictions of the final base models on the full training corpus.
    pub in_sample: PredictionMatrix,
}

/// Fits the base models on the whole training corpus and the meta-classifier
/// on out-of-fold predictions (`config.ensemble.stack_folds` folds).
pub fn fit_stack(specs: &[BaseSpec], train_set: &Corpus, config: &Config) -> Result<StackOutcome> {
    let base = fit_base_models(specs, train_set, config)?;
    let folds = config.ensemble.stack_folds;
    let oof = out_of_fold_prediction_matrix(train_set, folds, config.seed, |c| {
        fit_base_models(specs, c, config).map_err(|e| match e {
            PipelineError::Ensemble(e) => e,
            other => EnsembleError::Classifier(ClassifierError::Model(other.to_string())),
        })
    })?;
    let meta = fit_meta(&oof, &config.ensemble.meta)?;
    let in_sample = build_prediction_matrix(&base, train_set)?;
    Ok(StackOutcome {
        ensemble: StackingEnsemble::new(base, meta)?,
        meta_training: oof,
        in_sample,
    })
}
