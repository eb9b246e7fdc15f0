//! Stacking ensemble: base-model predictions become nominal features for a
//! statistical meta-classifier.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::classifier::{classifier_from_checkpoint, ClassifierError, TextClassifier};
use crate::corpus::{Corpus, LabelRegistry, TaskLabel};
use crate::encoder::tensor::argmax;
use crate::statml::{self, information_gain, ColumnKind, FeatureMatrix, FittedModel, StatError, StatKind, StatParams};

pub const CHECKPOINT_KIND: &str = "ensemble";

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("a base model set needs at least 2 members, got {0}")]
    TooFewModels(usize),
    #[error("duplicate base model name {0:?}")]
    DuplicateName(String),
    #[error("base model {0:?} uses a different label registry")]
    RegistryMismatch(String),
    #[error("cross-validation needs at least 2 folds and one sample per fold ({folds} folds, {rows} rows)")]
    Folds { folds: usize, rows: usize },
    #[error("meta encoding does not match the base model set: {0}")]
    Encoding(String),
    #[error("prediction matrix csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

pub type Result<T, E = EnsembleError> = std::result::Result<T, E>;

/// Ordered, uniquely named base classifiers sharing one label registry.
#[derive(Clone)]
pub struct BaseModelSet {
    members: Vec<(String, Arc<dyn TextClassifier>)>,
}

impl std::fmt::Debug for BaseModelSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BaseModelSet").field("names", &self.names()).finish()
    }
}

impl BaseModelSet {
    pub fn new(members: Vec<(String, Arc<dyn TextClassifier>)>) -> Result<Self> {
        if members.len() < 2 {
            return Err(EnsembleError::TooFewModels(members.len()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (name, _) in &members {
            if !seen.insert(name.as_str()) {
                return Err(EnsembleError::DuplicateName(name.clone()));
            }
        }
        let labels = members[0].1.labels();
        if let Some((name, _)) = members.iter().find(|(_, m)| m.labels() != labels) {
            return Err(EnsembleError::RegistryMismatch(name.clone()));
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.members.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn labels(&self) -> &LabelRegistry {
        self.members[0].1.labels()
    }

    pub fn members(&self) -> &[(String, Arc<dyn TextClassifier>)] {
        &self.members
    }

    /// Probability rows of every member for one tokenized text.
    pub fn predict_tokens(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>> {
        self.members
            .iter()
            .map(|(_, m)| m.predict_tokens(tokens).map_err(EnsembleError::from))
            .collect()
    }
}

/// Nominal base-model predictions, one column per model, with the aligned
/// truth. Cells and truth are label-registry indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    pub labels: LabelRegistry,
    pub models: Vec<String>,
    pub sample_ids: Vec<String>,
    pub truth: Vec<usize>,
    /// rows × models
    pub cells: Vec<Vec<usize>>,
    /// rows × models × classes; present when built from live models.
    pub probabilities: Option<Vec<Vec<Vec<f64>>>>,
}

impl PredictionMatrix {
    pub fn rows(&self) -> usize {
        self.cells.len()
    }

    pub fn column(&self, j: usize) -> Vec<usize> {
        self.cells.iter().map(|r| r[j]).collect()
    }

    /// Fraction of rows where column `j` equals the truth.
    pub fn column_accuracy(&self, j: usize) -> f64 {
        let hits = self.cells.iter().zip(&self.truth).filter(|(r, t)| r[j] == **t).count();
        hits as f64 / self.rows().max(1) as f64
    }

    /// `sample_id,true_label,<model>...` with label names in the cells.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| EnsembleError::Csv(e.to_string());
        let mut header = vec!["sample_id".to_string(), "true_label".to_string()];
        header.extend(self.models.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for ((id, t), row) in self.sample_ids.iter().zip(&self.truth).zip(&self.cells) {
            let mut rec = vec![id.clone(), self.labels.label(*t).to_string()];
            rec.extend(row.iter().map(|&c| self.labels.label(c).to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| EnsembleError::Csv(e.to_string()))
    }

    pub fn read_csv(reader: impl Read, labels: &LabelRegistry) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let csv_err = |e: csv::Error| EnsembleError::Csv(e.to_string());
        let header = r.headers().map_err(csv_err)?.clone();
        if header.len() < 3 || &header[0] != "sample_id" || &header[1] != "true_label" {
            return Err(EnsembleError::Csv("expected header sample_id,true_label,<model>...".into()));
        }
        let models: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let parse = |s: &str, line: usize| -> Result<usize> {
            TaskLabel::new(s)
                .ok()
                .and_then(|l| labels.index_of(&l))
                .ok_or_else(|| EnsembleError::Csv(format!("line {line}: unknown label {s:?}")))
        };
        let (mut ids, mut truth, mut cells) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let line = i + 2;
            if rec.len() != header.len() {
                return Err(EnsembleError::Csv(format!("line {line}: wrong field count")));
            }
            ids.push(rec[0].to_string());
            truth.push(parse(&rec[1], line)?);
            cells.push(rec.iter().skip(2).map(|s| parse(s, line)).collect::<Result<Vec<_>>>()?);
        }
        Ok(Self {
            labels: labels.clone(),
            models,
            sample_ids: ids,
            truth,
            cells,
            probabilities: None,
        })
    }
}

/// Runs every base model over the corpus; cell `(i, j)` is model `j`'s
/// argmax label on utterance `i`.
pub fn build_prediction_matrix(models: &BaseModelSet, corpus: &Corpus) -> Result<PredictionMatrix> {
    if corpus.registry() != models.labels() {
        return Err(EnsembleError::RegistryMismatch("<corpus>".into()));
    }
    let probs: Vec<Vec<Vec<f64>>> = corpus
        .utterances()
        .par_iter()
        .map(|u| {
            models
                .members
                .iter()
                .map(|(_, m)| m.predict_proba(&u.text).map_err(EnsembleError::from))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(PredictionMatrix {
        labels: models.labels().clone(),
        models: models.names().into_iter().map(str::to_string).collect(),
        sample_ids: corpus.iter().map(|u| u.id.clone()).collect(),
        truth: corpus.label_indices(),
        cells: probs.iter().map(|r| r.iter().map(|p| argmax(p)).collect()).collect(),
        probabilities: Some(probs),
    })
}

/// Out-of-fold prediction matrix: for each stratified fold, `fit` trains a
/// fresh base model set on the other folds and predicts the held-out rows.
/// Rows follow corpus order. Used to fit a meta-classifier on predictions
/// the base models did not see their own training data for.
pub fn out_of_fold_prediction_matrix<F>(corpus: &Corpus, folds: usize, seed: u64, fit: F) -> Result<PredictionMatrix>
where
    F: Fn(&Corpus) -> Result<BaseModelSet> + Sync,
{
    let rows = corpus.len();
    if folds < 2 || rows < folds {
        return Err(EnsembleError::Folds { folds, rows });
    }
    let assignment = stratified_folds(&corpus.label_indices(), folds, seed);
    let subset = |keep: &dyn Fn(usize) -> bool| -> Result<Corpus> {
        let u = corpus.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, u)| u.clone()).collect();
        Ok(Corpus::new(u, corpus.registry().clone())?)
    };
    let parts = (0..folds)
        .into_par_iter()
        .map(|f| {
            let held = subset(&|i| assignment[i] == f)?;
            if held.is_empty() {
                return Err(EnsembleError::Folds { folds, rows });
            }
            let models = fit(&subset(&|i| assignment[i] != f)?)?;
            build_prediction_matrix(&models, &held)
        })
        .collect::<Result<Vec<_>>>()?;
    let models = parts[0].models.clone();
    if parts.iter().any(|p| p.models != models) {
        return Err(EnsembleError::Encoding("folds produced different base model sets".into()));
    }
    let mut cursor = vec![0usize; folds];
    let mut out = PredictionMatrix {
        labels: corpus.registry().clone(),
        models,
        sample_ids: Vec::with_capacity(rows),
        truth: corpus.label_indices(),
        cells: Vec::with_capacity(rows),
        probabilities: Some(Vec::with_capacity(rows)),
    };
    for &f in &assignment {
        let (p, k) = (&parts[f], cursor[f]);
        cursor[f] += 1;
        out.sample_ids.push(p.sample_ids[k].clone());
        out.cells.push(p.cells[k].clone());
        if let (Some(dst), Some(src)) = (out.probabilities.as_mut(), p.probabilities.as_ref()) {
            dst.push(src[k].clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorScore {
    pub name: String,
    pub mean_information_gain: f64,
    pub std_information_gain: f64,
    pub mean_rank: f64,
    pub std_rank: f64,
}

/// Per-model cross-validated information gain, in prediction-matrix column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorRanking {
    pub folds: usize,
    pub scores: Vec<PredictorScore>,
}

impl PredictorRanking {
    /// Scores ordered best first (mean rank ascending, then name).
    pub fn ranked(&self) -> Vec<&PredictorScore> {
        let mut v: Vec<&PredictorScore> = self.scores.iter().collect();
        v.sort_by(|a, b| a.mean_rank.total_cmp(&b.mean_rank).then_with(|| a.name.cmp(&b.name)));
        v
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Stratified fold index per row: each class is shuffled and dealt round-robin.
pub fn stratified_folds(truth: &[usize], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = truth.iter().copied().max().map_or(0, |m| m + 1);
    let mut assignment = vec![0; truth.len()];
    let mut next = 0;
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == c).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    assignment
}

/// Information gain of each column against the truth on every held-out
/// fold; ranks within a fold break ties by model name.
pub fn rank_predictors_cv(matrix: &PredictionMatrix, folds: usize, seed: u64) -> Result<PredictorRanking> {
    let rows = matrix.rows();
    if folds < 2 || rows < folds {
        return Err(EnsembleError::Folds { folds, rows });
    }
    let assignment = stratified_folds(&matrix.truth, folds, seed);
    let n_models = matrix.models.len();
    let mut gains = vec![Vec::with_capacity(folds); n_models];
    let mut ranks = vec![Vec::with_capacity(folds); n_models];
    for f in 0..folds {
        let held: Vec<usize> = (0..rows).filter(|&i| assignment[i] == f).collect();
        if held.is_empty() {
            return Err(EnsembleError::Folds { folds, rows });
        }
        let y: Vec<usize> = held.iter().map(|&i| matrix.truth[i]).collect();
        let fold_gain: Vec<f64> = (0..n_models)
            .map(|j| {
                let a: Vec<usize> = held.iter().map(|&i| matrix.cells[i][j]).collect();
                information_gain(&y, &a)
            })
            .collect::<std::result::Result<_, _>>()?;
        let mut order: Vec<usize> = (0..n_models).collect();
        order.sort_by(|&a, &b| {
            fold_gain[b]
                .total_cmp(&fold_gain[a])
                .then_with(|| matrix.models[a].cmp(&matrix.models[b]))
        });
        for (pos, &j) in order.iter().enumerate() {
            ranks[j].push((pos + 1) as f64);
        }
        for j in 0..n_models {
            gains[j].push(fold_gain[j]);
        }
    }
    let scores = (0..n_models)
        .map(|j| {
            let (mig, sig) = mean_std(&gains[j]);
            let (mr, sr) = mean_std(&ranks[j]);
            PredictorScore {
                name: matrix.models[j].clone(),
                mean_information_gain: mig,
                std_information_gain: sig,
                mean_rank: mr,
                std_rank: sr,
            }
        })
        .collect();
    Ok(PredictorRanking { folds, scores })
}

/// How prediction-matrix rows are turned into meta features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaEncoding {
    pub models: Vec<String>,
    pub labels: Vec<String>,
    /// Append each model's probability row as continuous columns.
    pub include_probabilities: bool,
}

impl MetaEncoding {
    pub fn n_columns(&self) -> usize {
        let base = self.models.len() * self.labels.len();
        if self.include_probabilities {
            2 * base
        } else {
            base
        }
    }

    pub fn column_kinds(&self) -> Vec<ColumnKind> {
        let c = self.labels.len();
        let mut kinds: Vec<ColumnKind> = (0..self.models.len() * c)
            .map(|k| ColumnKind::OneHotNominal { group: k / c })
            .collect();
        if self.include_probabilities {
            kinds.extend(std::iter::repeat(ColumnKind::Continuous).take(self.models.len() * c));
        }
        kinds
    }

    /// One-hot block per model (N·C columns), optionally followed by the
    /// models' probability rows.
    pub fn encode(&self, cells: &[usize], probabilities: Option<&[Vec<f64>]>) -> Result<Vec<f64>> {
        let c = self.labels.len();
        if cells.len() != self.models.len() {
            return Err(EnsembleError::Encoding(format!(
                "{} cells for {} models",
                cells.len(),
                self.models.len()
            )));
        }
        let mut row = vec![0.0; self.models.len() * c];
        for (j, &cell) in cells.iter().enumerate() {
            if cell >= c {
                return Err(EnsembleError::Encoding(format!("label index {cell} out of range")));
            }
            row[j * c + cell] = 1.0;
        }
        if self.include_probabilities {
            let probs = probabilities
                .ok_or_else(|| EnsembleError::Encoding("probability features enabled but not supplied".into()))?;
            for p in probs {
                row.extend_from_slice(p);
            }
        }
        Ok(row)
    }

    /// Inverse of the one-hot block of [`MetaEncoding::encode`].
    pub fn decode(&self, row: &[f64]) -> Vec<usize> {
        let c = self.labels.len();
        (0..self.models.len())
            .map(|j| argmax(&row[j * c..(j + 1) * c]))
            .collect()
    }

    fn matrix(&self, m: &PredictionMatrix) -> Result<FeatureMatrix> {
        let rows = (0..m.rows())
            .map(|i| {
                let probs = m.probabilities.as_ref().map(|p| p[i].as_slice());
                self.encode(&m.cells[i], probs)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureMatrix::from_rows(&rows, self.column_kinds())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaOptions {
    pub kind: StatKind,
    pub include_probabilities: bool,
    pub params: StatParams,
}

impl Default for MetaOptions {
    fn default() -> Self {
        Self {
            kind: StatKind::LogisticRegression,
            include_probabilities: false,
            params: StatParams::default(),
        }
    }
}

/// Fitted meta-classifier plus the encoding it was fitted with.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaModel {
    pub encoding: MetaEncoding,
    pub model: FittedModel,
}

impl MetaModel {
    pub fn predict_matrix(&self, m: &PredictionMatrix) -> Result<Vec<usize>> {
        if m.models != self.encoding.models {
            return Err(EnsembleError::Encoding("prediction matrix columns differ".into()));
        }
        Ok(self.model.predict(&self.encoding.matrix(m)?)?.labels)
    }

    pub fn accuracy(&self, m: &PredictionMatrix) -> Result<f64> {
        let pred = self.predict_matrix(m)?;
        Ok(pred.iter().zip(&m.truth).filter(|(a, b)| a == b).count() as f64 / m.rows().max(1) as f64)
    }
}

/// One-hot encodes the matrix (N models × C classes columns) and fits the
/// chosen statistical model on it.
pub fn fit_meta(matrix: &PredictionMatrix, options: &MetaOptions) -> Result<MetaModel> {
    let encoding = MetaEncoding {
        models: matrix.models.clone(),
        labels: matrix.labels.labels().iter().map(|l| l.to_string()).collect(),
        include_probabilities: options.include_probabilities,
    };
    let x = encoding.matrix(matrix)?;
    let model = statml::fit(options.kind, &x, &matrix.truth, matrix.labels.len(), &options.params)?;
    Ok(MetaModel { encoding, model })
}

/// Runs every base model on `text`, encodes the predictions and applies the
/// meta-classifier. Returns the label index and the meta probability row.
pub fn ensemble_predict(models: &BaseModelSet, meta: &MetaModel, text: &str) -> Result<(usize, Vec<f64>)> {
    let tokens = crate::text::tokenize(text);
    if tokens.is_empty() {
        return Err(ClassifierError::EmptyInput.into());
    }
    let probs = predict_encoded(models, meta, &tokens)?;
    Ok((argmax(&probs), probs))
}

fn predict_encoded(models: &BaseModelSet, meta: &MetaModel, tokens: &[String]) -> Result<Vec<f64>> {
    let names: Vec<String> = models.names().into_iter().map(str::to_string).collect();
    if names != meta.encoding.models {
        return Err(EnsembleError::Encoding(format!(
            "fitted on {:?}, given {:?}",
            meta.encoding.models, names
        )));
    }
    let probs = models.predict_tokens(tokens)?;
    let cells: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let row = meta.encoding.encode(&cells, Some(&probs))?;
    Ok(statml::Classifier::predict_proba_row(&meta.model, &row))
}

/// A base model set and its meta-classifier, usable as one text classifier.
#[derive(Debug, Clone)]
pub struct StackingEnsemble {
    pub base: BaseModelSet,
    pub meta: MetaModel,
}

impl StackingEnsemble {
    pub fn new(base: BaseModelSet, meta: MetaModel) -> Result<Self> {
        let names: Vec<String> = base.names().into_iter().map(str::to_string).collect();
        if names != meta.encoding.models {
            return Err(EnsembleError::Encoding("base model names differ from the meta encoding".into()));
        }
        Ok(Self { base, meta })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ClassifierError> {
        let inner = || -> Result<Self> {
            ck.expect_kind(CHECKPOINT_KIND)?;
            let encoding: MetaEncoding = ck.header_as()?;
            let members = encoding
                .models
                .iter()
                .map(|name| {
                    let m = classifier_from_checkpoint(ck.child(&format!("base:{name}"))?)?;
                    Ok((name.clone(), Arc::from(m)))
                })
                .collect::<Result<Vec<_>>>()?;
            let model = FittedModel::from_checkpoint(ck.child("meta")?)?;
            Self::new(BaseModelSet::new(members)?, MetaModel { encoding, model })
        };
        inner().map_err(|e| match e {
            EnsembleError::Classifier(c) => c,
            other => ClassifierError::Model(other.to_string()),
        })
    }
}

impl TextClassifier for StackingEnsemble {
    fn labels(&self) -> &LabelRegistry {
        self.base.labels()
    }

    fn predict_tokens(&self, tokens: &[String]) -> Result<Vec<f64>, ClassifierError> {
        if tokens.is_empty() {
            return Err(ClassifierError::EmptyInput);
        }
        predict_encoded(&self.base, &self.meta, tokens).map_err(|e| match e {
            EnsembleError::Classifier(c) => c,
            other => ClassifierError::Model(other.to_string()),
        })
    }

    fn to_checkpoint(&self) -> Result<Checkpoint, ClassifierError> {
        let mut ck = Checkpoint::new(CHECKPOINT_KIND, &self.meta.encoding)?;
        for (name, m) in self.base.members() {
            ck = ck.with_child(format!("base:{name}"), m.to_checkpoint()?);
        }
        Ok(ck.with_child("meta", self.meta.model.to_checkpoint()?))
    }
}
