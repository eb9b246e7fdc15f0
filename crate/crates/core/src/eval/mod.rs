//! Metrics, confusion matrices, run comparison and loss-ranked error
//! forensics. Attribution lives in [`explain`].

mod explain;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassifierError, TextClassifier};
use crate::corpus::{Corpus, LabelRegistry};
use crate::encoder::tensor::argmax;

pub use explain::{occlusion_attribution, occlusion_attribution_with, Attribution, IsolatedToken, STRONG_NEGATIVE};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot evaluate an empty corpus")]
    Empty,
    #[error("model and corpus use different label registries")]
    RegistryMismatch,
    #[error("reports were computed on different corpora ({a} vs {b})")]
    CorpusMismatch { a: String, b: String },
    #[error("probability row for {id} has {found} entries, expected {expected}")]
    RowWidth { id: String, found: usize, expected: usize },
    #[error("label index {0} is out of range")]
    LabelRange(usize),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// One scored sample: the model's probability row next to the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub id: String,
    pub text: String,
    pub actual: usize,
    pub probabilities: Vec<f64>,
}

impl SamplePrediction {
    pub fn predicted(&self) -> usize {
        argmax(&self.probabilities)
    }

    /// Natural-log cross-entropy `−ln p(actual)`. A zero probability is
    /// floored at the smallest positive double so the loss stays finite.
    pub fn loss(&self) -> f64 {
        -self.probabilities[self.actual].max(f64::MIN_POSITIVE).ln()
    }
}

/// Scores every utterance (in parallel, corpus order preserved).
pub fn predict_corpus(model: &dyn TextClassifier, corpus: &Corpus) -> Result<Vec<SamplePrediction>> {
    if corpus.is_empty() {
        return Err(EvalError::Empty);
    }
    if model.labels() != corpus.registry() {
        return Err(EvalError::RegistryMismatch);
    }
    let truth = corpus.label_indices();
    corpus
        .utterances()
        .par_iter()
        .zip(truth)
        .map(|(u, actual)| {
            Ok(SamplePrediction {
                id: u.id.clone(),
                text: u.text.clone(),
                actual,
                probabilities: model.predict_proba(&u.text)?,
            })
        })
        .collect()
}

fn check_rows(labels: &LabelRegistry, preds: &[SamplePrediction]) -> Result<()> {
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    for p in preds {
        if p.probabilities.len() != labels.len() {
            return Err(EvalError::RowWidth {
                id: p.id.clone(),
                found: p.probabilities.len(),
                expected: labels.len(),
            });
        }
        if p.actual >= labels.len() {
            return Err(EvalError::LabelRange(p.actual));
        }
    }
    Ok(())
}

fn label_names(labels: &LabelRegistry) -> Vec<String> {
    labels.labels().iter().map(|l| l.to_string()).collect()
}

/// C×C counts, row = actual, column = predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
    /// Each row divided by its actual-class count; rows with no samples
    /// stay all-zero and are listed in `empty_rows`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized: Option<Vec<Vec<f64>>>,
    pub empty_rows: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn from_predictions(labels: &LabelRegistry, preds: &[SamplePrediction], normalized: bool) -> Result<Self> {
        check_rows(labels, preds)?;
        let c = labels.len();
        let mut counts = vec![vec![0; c]; c];
        for p in preds {
            counts[p.actual][p.predicted()] += 1;
        }
        let mut m = Self {
            labels: label_names(labels),
            empty_rows: (0..c).filter(|&i| counts[i].iter().sum::<usize>() == 0).collect(),
            counts,
            normalized: None,
        };
        if normalized {
            m.normalized = Some(m.normalized_rows());
        }
        Ok(m)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn normalized_rows(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let n: usize = row.iter().sum();
                row.iter()
                    .map(|&v| if n == 0 { 0.0 } else { v as f64 / n as f64 })
                    .collect()
            })
            .collect()
    }

    /// Header `actual,<labels>`; normalized values when present, else counts.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["actual".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (i, label) in self.labels.iter().enumerate() {
            let mut rec = vec![label.clone()];
            match &self.normalized {
                Some(rows) => rec.extend(rows[i].iter().map(|v| v.to_string())),
                None => rec.extend(self.counts[i].iter().map(|v| v.to_string())),
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let width = self.labels.iter().map(String::len).max().unwrap_or(0).max(6);
        let mut out = format!("{:<width$}", "actual");
        for l in &self.labels {
            let _ = write!(out, " {l:>width$}");
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            let _ = write!(out, "{l:<width$}");
            for j in 0..self.labels.len() {
                match &self.normalized {
                    Some(rows) => {
                        let _ = write!(out, " {:>width$.3}", rows[i][j]);
                    }
                    None => {
                        let _ = write!(out, " {:>width$}", self.counts[i][j]);
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub corpus_hash: String,
    pub samples: usize,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub mean_loss: f64,
    pub confusion: ConfusionMatrix,
    /// Cross-entropy per sample id.
    pub losses: BTreeMap<String, f64>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_predictions(labels: &LabelRegistry, corpus_hash: &str, preds: &[SamplePrediction]) -> Result<Self> {
        let confusion = ConfusionMatrix::from_predictions(labels, preds, true)?;
        let c = labels.len();
        let per_class: Vec<ClassMetrics> = (0..c)
            .map(|k| {
                let tp = confusion.counts[k][k];
                let predicted: usize = (0..c).map(|i| confusion.counts[i][k]).sum();
                let support: usize = confusion.counts[k].iter().sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassMetrics {
                    label: labels.label(k).to_string(),
                    precision,
                    recall,
                    f1,
                    support,
                }
            })
            .collect();
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / c as f64;
        let losses: BTreeMap<String, f64> = preds.iter().map(|p| (p.id.clone(), p.loss())).collect();
        Ok(Self {
            corpus_hash: corpus_hash.to_string(),
            samples: preds.len(),
            accuracy: ratio(confusion.trace(), confusion.total()),
            macro_precision: mean(|m| m.precision),
            macro_recall: mean(|m| m.recall),
            macro_f1: mean(|m| m.f1),
            mean_loss: losses.values().sum::<f64>() / losses.len() as f64,
            per_class,
            confusion,
            losses,
        })
    }

    pub fn to_text(&self) -> String {
        let width = self.per_class.iter().map(|m| m.label.len()).max().unwrap_or(0).max(5);
        let mut out = format!(
            "samples {}  accuracy {:.4}  mean loss {:.4}\n{:<width$} {:>9} {:>9} {:>9} {:>7}\n",
            self.samples, self.accuracy, self.mean_loss, "class", "precision", "recall", "f1", "support"
        );
        for m in &self.per_class {
            let _ = writeln!(
                out,
                "{:<width$} {:>9.4} {:>9.4} {:>9.4} {:>7}",
                m.label, m.precision, m.recall, m.f1, m.support
            );
        }
        let _ = writeln!(
            out,
            "{:<width$} {:>9.4} {:>9.4} {:>9.4} {:>7}",
            "macro", self.macro_precision, self.macro_recall, self.macro_f1, self.samples
        );
        out
    }
}

pub fn evaluate(model: &dyn TextClassifier, corpus: &Corpus) -> Result<MetricsReport> {
    let preds = predict_corpus(model, corpus)?;
    MetricsReport::from_predictions(corpus.registry(), &corpus.content_hash(), &preds)
}

pub fn confusion(model: &dyn TextClassifier, corpus: &Corpus, normalized: bool) -> Result<ConfusionMatrix> {
    ConfusionMatrix::from_predictions(corpus.registry(), &predict_corpus(model, corpus)?, normalized)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDelta {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Differences `b − a`; accuracy in percentage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    pub corpus_hash: String,
    pub accuracy_points: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassDelta>,
}

impl RunComparison {
    pub fn to_text(&self) -> String {
        let width = self.per_class.iter().map(|m| m.label.len()).max().unwrap_or(0).max(5);
        let mut out = format!(
            "accuracy {:+.2} points\n{:<width$} {:>10} {:>10} {:>10}\n",
            self.accuracy_points, "class", "precision", "recall", "f1"
        );
        for d in &self.per_class {
            let _ = writeln!(out, "{:<width$} {:>+10.4} {:>+10.4} {:>+10.4}", d.label, d.precision, d.recall, d.f1);
        }
        let _ = writeln!(
            out,
            "{:<width$} {:>+10.4} {:>+10.4} {:>+10.4}",
            "macro", self.macro_precision, self.macro_recall, self.macro_f1
        );
        out
    }
}

pub fn compare_runs(a: &MetricsReport, b: &MetricsReport) -> Result<RunComparison> {
    if a.corpus_hash != b.corpus_hash {
        return Err(EvalError::CorpusMismatch {
            a: a.corpus_hash.clone(),
            b: b.corpus_hash.clone(),
        });
    }
    if a.confusion.labels != b.confusion.labels {
        return Err(EvalError::RegistryMismatch);
    }
    Ok(RunComparison {
        corpus_hash: a.corpus_hash.clone(),
        accuracy_points: 100.0 * (b.accuracy - a.accuracy),
        macro_precision: b.macro_precision - a.macro_precision,
        macro_recall: b.macro_recall - a.macro_recall,
        macro_f1: b.macro_f1 - a.macro_f1,
        per_class: a
            .per_class
            .iter()
            .zip(&b.per_class)
            .map(|(x, y)| ClassDelta {
                label: x.label.clone(),
                precision: y.precision - x.precision,
                recall: y.recall - x.recall,
                f1: y.f1 - x.f1,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub id: String,
    pub text: String,
    pub actual: String,
    pub predicted: String,
    pub loss: f64,
    /// Full probability row in registry order.
    pub probabilities: Vec<f64>,
}

pub const DEFAULT_LOSS_THRESHOLD: f64 = 1.0;

/// Misclassified samples with loss above `threshold`, highest loss first
/// (ties by id).
pub fn worst_errors_from(labels: &LabelRegistry, preds: &[SamplePrediction], threshold: f64) -> Vec<ErrorRecord> {
    let mut out: Vec<ErrorRecord> = preds
        .iter()
        .filter(|p| p.predicted() != p.actual && p.loss() > threshold)
        .map(|p| ErrorRecord {
            id: p.id.clone(),
            text: p.text.clone(),
            actual: labels.label(p.actual).to_string(),
            predicted: labels.label(p.predicted()).to_string(),
            loss: p.loss(),
            probabilities: p.probabilities.clone(),
        })
        .collect();
    out.sort_by(|a, b| b.loss.total_cmp(&a.loss).then_with(|| a.id.cmp(&b.id)));
    out
}

pub fn worst_errors(model: &dyn TextClassifier, corpus: &Corpus, threshold: f64) -> Result<Vec<ErrorRecord>> {
    Ok(worst_errors_from(corpus.registry(), &predict_corpus(model, corpus)?, threshold))
}

pub fn errors_to_text(labels: &LabelRegistry, errors: &[ErrorRecord]) -> String {
    let mut out = String::new();
    for e in errors {
        let _ = writeln!(out, "{:.2}  {} -> {}  {:?}", e.loss, e.actual, e.predicted, e.text);
        for (l, p) in labels.labels().iter().zip(&e.probabilities) {
            let _ = writeln!(out, "        {:<20} {:.3}", l.as_str(), p);
        }
    }
    out
}
