//! Statistical classifiers over feature vectors and information-gain scoring.
//!
//! Six fit kinds are provided (multinomial, Bernoulli and Gaussian naive
//! Bayes, multinomial logistic regression, linear discriminant analysis and a
//! random forest). Other learners plug in through the [`Classifier`] trait.

mod forest;
mod info;
mod lda;
mod logistic;
mod nb;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};

pub use forest::{ForestParams, RandomForest};
pub use info::{entropy, information_gain};
pub use lda::Lda;
pub use logistic::LogisticRegression;
pub use nb::{BernoulliNb, GaussianNb, MultinomialNb};

pub const CHECKPOINT_KIND: &str = "statml";

#[derive(Debug, Error)]
pub enum StatError {
    #[error("feature matrix: {0}")]
    Matrix(String),
    #[error("{labels} labels for {rows} rows")]
    LabelCount { labels: usize, rows: usize },
    #[error("label {label} outside {n_classes} classes")]
    LabelRange { label: usize, n_classes: usize },
    #[error("fit needs at least two classes present, found {0}")]
    TooFewClasses(usize),
    #[error("{kind} cannot be fitted on {column} columns")]
    ColumnKind { kind: StatKind, column: String },
    #[error("expected {expected} feature columns, got {found}")]
    Shape { expected: usize, found: usize },
    #[error("feature column kinds differ from the ones the model was fitted on")]
    ColumnKindMismatch,
    #[error("within-class covariance is singular even with shrinkage {shrinkage}; increase the shrinkage")]
    SingularCovariance { shrinkage: f64 },
    #[error("empty input")]
    Empty,
    #[error("unknown model kind {0:?}")]
    UnknownKind(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

pub type Result<T, E = StatError> = std::result::Result<T, E>;

/// How a feature column is to be interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ColumnKind {
    Count,
    Binary,
    /// Member of a one-hot group; each group sums to exactly 1 per row.
    OneHotNominal { group: usize },
    Continuous,
}

impl ColumnKind {
    fn describe(&self) -> &'static str {
        match self {
            ColumnKind::Count => "count",
            ColumnKind::Binary => "binary",
            ColumnKind::OneHotNominal { .. } => "one_hot_nominal",
            ColumnKind::Continuous => "continuous",
        }
    }

    fn is_nonnegative(&self) -> bool {
        !matches!(self, ColumnKind::Continuous)
    }

    fn is_binary(&self) -> bool {
        matches!(self, ColumnKind::Binary | ColumnKind::OneHotNominal { .. })
    }
}

/// Dense row-major feature matrix with per-column kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    kinds: Vec<ColumnKind>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, kinds: Vec<ColumnKind>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(StatError::Matrix(format!("{} values for {rows}x{cols}", values.len())));
        }
        if kinds.len() != cols {
            return Err(StatError::Matrix(format!("{} column kinds for {cols} columns", kinds.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(StatError::Matrix(format!(
                "non-finite value at row {}, column {}",
                i / cols.max(1),
                i % cols.max(1)
            )));
        }
        let m = Self {
            rows,
            cols,
            values,
            kinds,
        };
        m.check_kinds()?;
        Ok(m)
    }

    /// All columns share one kind.
    pub fn uniform(rows: usize, cols: usize, values: Vec<f64>, kind: ColumnKind) -> Result<Self> {
        Self::new(rows, cols, values, vec![kind; cols])
    }

    pub fn from_rows(rows: &[Vec<f64>], kinds: Vec<ColumnKind>) -> Result<Self> {
        let cols = kinds.len();
        if let Some(r) = rows.iter().position(|r| r.len() != cols) {
            return Err(StatError::Matrix(format!("row {r} has {} values, expected {cols}", rows[r].len())));
        }
        Self::new(rows.len(), cols, rows.concat(), kinds)
    }

    fn check_kinds(&self) -> Result<()> {
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (j, k) in self.kinds.iter().enumerate() {
            if let ColumnKind::OneHotNominal { group } = k {
                groups.entry(*group).or_default().push(j);
            }
        }
        for r in 0..self.rows {
            let row = self.row(r);
            for (j, k) in self.kinds.iter().enumerate() {
                let v = row[j];
                let ok = match k {
                    ColumnKind::Count => v >= 0.0,
                    ColumnKind::Binary | ColumnKind::OneHotNominal { .. } => v == 0.0 || v == 1.0,
                    ColumnKind::Continuous => true,
                };
                if !ok {
                    return Err(StatError::Matrix(format!(
                        "row {r}, column {j}: {v} is not a valid {} value",
                        k.describe()
                    )));
                }
            }
            for (g, cols) in &groups {
                if cols.iter().map(|&j| row[j]).sum::<f64>() != 1.0 {
                    return Err(StatError::Matrix(format!("row {r}: one-hot group {g} does not sum to 1")));
                }
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    MultinomialNb,
    BernoulliNb,
    GaussianNb,
    LogisticRegression,
    Lda,
    RandomForest,
}

impl StatKind {
    pub const ALL: [StatKind; 6] = [
        StatKind::MultinomialNb,
        StatKind::BernoulliNb,
        StatKind::GaussianNb,
        StatKind::LogisticRegression,
        StatKind::Lda,
        StatKind::RandomForest,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StatKind::MultinomialNb => "multinomial_nb",
            StatKind::BernoulliNb => "bernoulli_nb",
            StatKind::GaussianNb => "gaussian_nb",
            StatKind::LogisticRegression => "logistic_regression",
            StatKind::Lda => "lda",
            StatKind::RandomForest => "random_forest",
        }
    }
}

impl fmt::Display for StatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for StatKind {
    type Err = StatError;

    fn from_str(s: &str) -> Result<Self> {
        StatKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| StatError::UnknownKind(s.to_string()))
    }
}

/// Hyperparameters for every fit kind; each kind reads the fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatParams {
    /// Additive smoothing for the discrete naive Bayes kinds.
    pub alpha: f64,
    pub var_floor: f64,
    pub l2: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub lda_shrinkage: f64,
    pub forest: ForestParams,
    pub seed: u64,
}

impl Default for StatParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            var_floor: 1e-9,
            l2: 1e-4,
            tolerance: 1e-6,
            max_iterations: 10_000,
            lda_shrinkage: 1e-6,
            forest: ForestParams::default(),
            seed: 0,
        }
    }
}

/// Extension point for meta-learners beyond the built-in kinds.
pub trait Classifier: Send + Sync {
    fn name(&self) -> &str;
    fn n_classes(&self) -> usize;
    fn n_features(&self) -> usize;
    /// Class probabilities for one feature row.
    fn predict_proba_row(&self, row: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum StatModel {
    MultinomialNb(MultinomialNb),
    BernoulliNb(BernoulliNb),
    GaussianNb(GaussianNb),
    LogisticRegression(LogisticRegression),
    Lda(Lda),
    RandomForest(RandomForest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: StatKind,
    n_classes: usize,
    columns: Vec<ColumnKind>,
    params: StatParams,
}

/// Fitted model together with the column kinds it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub model: StatModel,
    columns: Vec<ColumnKind>,
    params: StatParams,
}

fn check_fit_inputs(kind: StatKind, x: &FeatureMatrix, y: &[usize], n_classes: usize) -> Result<()> {
    if y.len() != x.rows() {
        return Err(StatError::LabelCount {
            labels: y.len(),
            rows: x.rows(),
        });
    }
    if let Some(&label) = y.iter().find(|&&l| l >= n_classes) {
        return Err(StatError::LabelRange { label, n_classes });
    }
    let mut present = vec![false; n_classes];
    y.iter().for_each(|&l| present[l] = true);
    let distinct = present.iter().filter(|&&p| p).count();
    if distinct < 2 {
        return Err(StatError::TooFewClasses(distinct));
    }
    let bad = x.kinds().iter().find(|k| match kind {
        StatKind::MultinomialNb => !k.is_nonnegative(),
        StatKind::BernoulliNb => !k.is_binary(),
        _ => false,
    });
    if let Some(k) = bad {
        return Err(StatError::ColumnKind {
            kind,
            column: k.describe().to_string(),
        });
    }
    Ok(())
}

/// Fits a model of `kind` on `x` with class indices `y` in `0..n_classes`.
pub fn fit(kind: StatKind, x: &FeatureMatrix, y: &[usize], n_classes: usize, params: &StatParams) -> Result<FittedModel> {
    check_fit_inputs(kind, x, y, n_classes)?;
    let model = match kind {
        StatKind::MultinomialNb => StatModel::MultinomialNb(MultinomialNb::fit(x, y, n_classes, params.alpha)),
        StatKind::BernoulliNb => StatModel::BernoulliNb(BernoulliNb::fit(x, y, n_classes, params.alpha)),
        StatKind::GaussianNb => StatModel::GaussianNb(GaussianNb::fit(x, y, n_classes, params.var_floor)),
        StatKind::LogisticRegression => StatModel::LogisticRegression(LogisticRegression::fit(x, y, n_classes, params)),
        StatKind::Lda => StatModel::Lda(Lda::fit(x, y, n_classes, params.lda_shrinkage)?),
        StatKind::RandomForest => {
            StatModel::RandomForest(RandomForest::fit(x, y, n_classes, &params.forest, params.seed))
        }
    };
    Ok(FittedModel {
        model,
        columns: x.kinds().to_vec(),
        params: params.clone(),
    })
}

impl StatModel {
    pub fn kind(&self) -> StatKind {
        match self {
            StatModel::MultinomialNb(_) => StatKind::MultinomialNb,
            StatModel::BernoulliNb(_) => StatKind::BernoulliNb,
            StatModel::GaussianNb(_) => StatKind::GaussianNb,
            StatModel::LogisticRegression(_) => StatKind::LogisticRegression,
            StatModel::Lda(_) => StatKind::Lda,
            StatModel::RandomForest(_) => StatKind::RandomForest,
        }
    }

    fn proba(&self, row: &[f64]) -> Vec<f64> {
        match self {
            StatModel::MultinomialNb(m) => m.predict_proba_row(row),
            StatModel::BernoulliNb(m) => m.predict_proba_row(row),
            StatModel::GaussianNb(m) => m.predict_proba_row(row),
            StatModel::LogisticRegression(m) => m.predict_proba_row(row),
            StatModel::Lda(m) => m.predict_proba_row(row),
            StatModel::RandomForest(m) => m.predict_proba_row(row),
        }
    }

    fn tensors(&self) -> Vec<(String, Vec<f64>)> {
        match self {
            StatModel::MultinomialNb(m) => m.tensors(),
            StatModel::BernoulliNb(m) => m.tensors(),
            StatModel::GaussianNb(m) => m.tensors(),
            StatModel::LogisticRegression(m) => m.tensors(),
            StatModel::Lda(m) => m.tensors(),
            StatModel::RandomForest(m) => m.tensors(),
        }
    }
}

/// Prediction output: argmax class indices and their probability rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub labels: Vec<usize>,
    pub probabilities: Vec<Vec<f64>>,
}

impl FittedModel {
    pub fn kind(&self) -> StatKind {
        self.model.kind()
    }

    pub fn n_classes(&self) -> usize {
        Classifier::n_classes(self)
    }

    pub fn columns(&self) -> &[ColumnKind] {
        &self.columns
    }

    pub fn params(&self) -> &StatParams {
        &self.params
    }

    pub fn check_input(&self, x: &FeatureMatrix) -> Result<()> {
        if x.cols() != self.columns.len() {
            return Err(StatError::Shape {
                expected: self.columns.len(),
                found: x.cols(),
            });
        }
        if x.kinds() != self.columns.as_slice() {
            return Err(StatError::ColumnKindMismatch);
        }
        Ok(())
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        Ok((0..x.rows()).map(|r| self.model.proba(x.row(r))).collect())
    }

    /// Argmax labels (ties go to the lowest class index) with probabilities.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Predictions> {
        let probabilities = self.predict_proba(x)?;
        let labels = probabilities.iter().map(|p| crate::encoder::tensor::argmax(p)).collect();
        Ok(Predictions { labels, probabilities })
    }

    pub fn accuracy(&self, x: &FeatureMatrix, y: &[usize]) -> Result<f64> {
        let p = self.predict(x)?;
        if y.is_empty() {
            return Err(StatError::Empty);
        }
        Ok(p.labels.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let header = Header {
            kind: self.kind(),
            n_classes: self.n_classes(),
            columns: self.columns.clone(),
            params: self.params.clone(),
        };
        let mut ck = Checkpoint::new(CHECKPOINT_KIND, &header)?;
        for (name, values) in self.model.tensors() {
            ck = ck.with_tensor(name, values);
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let h: Header = ck.header_as()?;
        let n_features = h.columns.len();
        let c = h.n_classes;
        let model = match h.kind {
            StatKind::MultinomialNb => StatModel::MultinomialNb(MultinomialNb::from_checkpoint(ck, c, n_features)?),
            StatKind::BernoulliNb => StatModel::BernoulliNb(BernoulliNb::from_checkpoint(ck, c, n_features)?),
            StatKind::GaussianNb => StatModel::GaussianNb(GaussianNb::from_checkpoint(ck, c, n_features)?),
            StatKind::LogisticRegression => {
                StatModel::LogisticRegression(LogisticRegression::from_checkpoint(ck, c, n_features)?)
            }
            StatKind::Lda => StatModel::Lda(Lda::from_checkpoint(ck, c, n_features)?),
            StatKind::RandomForest => StatModel::RandomForest(RandomForest::from_checkpoint(ck, c, n_features)?),
        };
        Ok(Self {
            model,
            columns: h.columns,
            params: h.params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_checkpoint()?.save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl Classifier for FittedModel {
    fn name(&self) -> &str {
        self.kind().as_str()
    }

    fn n_classes(&self) -> usize {
        match &self.model {
            StatModel::MultinomialNb(m) => m.n_classes(),
            StatModel::BernoulliNb(m) => m.n_classes(),
            StatModel::GaussianNb(m) => m.n_classes(),
            StatModel::LogisticRegression(m) => m.n_classes(),
            StatModel::Lda(m) => m.n_classes(),
            StatModel::RandomForest(m) => m.n_classes(),
        }
    }

    fn n_features(&self) -> usize {
        self.columns.len()
    }

    fn predict_proba_row(&self, row: &[f64]) -> Vec<f64> {
        self.model.proba(row)
    }
}

/// Softmax of log-scores; `-inf` entries get probability exactly 0.
pub(crate) fn normalize_log(mut scores: Vec<f64>) -> Vec<f64> {
    crate::encoder::tensor::softmax_in_place(&mut scores);
    scores
}

pub(crate) fn class_counts(y: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    y.iter().for_each(|&l| counts[l] += 1);
    counts
}

pub(crate) fn read_tensor(ck: &Checkpoint, name: &str, len: usize) -> Result<Vec<f64>> {
    let t = ck.tensor(name)?;
    if t.len() != len {
        return Err(StatError::Shape {
            expected: len,
            found: t.len(),
        });
    }
    Ok(t.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor_onehot() -> (FeatureMatrix, Vec<usize>) {
        // Two nominal attributes a, b in {0, 1}; label = a xor b. Each attribute
        // value pair is encoded as a one-hot over the four combinations.
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..3 {
            for a in 0..2 {
                for b in 0..2 {
                    let mut row = vec![0.0; 4];
                    row[a * 2 + b] = 1.0;
                    rows.push(row);
                    y.push(a ^ b);
                }
            }
        }
        let kinds = vec![ColumnKind::OneHotNominal { group: 0 }; 4];
        (FeatureMatrix::from_rows(&rows, kinds).unwrap(), y)
    }

    #[test]
    fn one_hot_groups_are_validated() {
        let kinds = vec![ColumnKind::OneHotNominal { group: 0 }; 2];
        assert!(FeatureMatrix::from_rows(&[vec![1.0, 1.0]], kinds.clone()).is_err());
        assert!(FeatureMatrix::from_rows(&[vec![0.0, 1.0]], kinds).is_ok());
        assert!(FeatureMatrix::from_rows(&[vec![f64::NAN]], vec![ColumnKind::Continuous]).is_err());
        assert!(FeatureMatrix::from_rows(&[vec![-1.0]], vec![ColumnKind::Count]).is_err());
    }

    #[test]
    fn every_kind_fits_xor_onehot_and_normalizes() {
        let (x, y) = xor_onehot();
        for kind in StatKind::ALL {
            let m = fit(kind, &x, &y, 2, &StatParams::default()).unwrap();
            let p = m.predict(&x).unwrap();
            for row in &p.probabilities {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{kind}");
                assert!(row.iter().all(|&v| v >= 0.0));
            }
            if matches!(kind, StatKind::LogisticRegression | StatKind::RandomForest | StatKind::MultinomialNb) {
                assert_eq!(m.accuracy(&x, &y).unwrap(), 1.0, "{kind}");
            }
        }
    }

    #[test]
    fn fit_preconditions() {
        let (x, y) = xor_onehot();
        let p = StatParams::default();
        assert!(matches!(
            fit(StatKind::LogisticRegression, &x, &vec![0; y.len()], 2, &p),
            Err(StatError::TooFewClasses(1))
        ));
        assert!(matches!(
            fit(StatKind::LogisticRegression, &x, &y[1..], 2, &p),
            Err(StatError::LabelCount { .. })
        ));
        let cont = FeatureMatrix::from_rows(&[vec![0.5], vec![-0.5]], vec![ColumnKind::Continuous]).unwrap();
        assert!(matches!(
            fit(StatKind::MultinomialNb, &cont, &[0, 1], 2, &p),
            Err(StatError::ColumnKind { .. })
        ));
    }

    #[test]
    fn predict_checks_columns() {
        let (x, y) = xor_onehot();
        let m = fit(StatKind::GaussianNb, &x, &y, 2, &StatParams::default()).unwrap();
        let narrow = FeatureMatrix::from_rows(&[vec![1.0]], vec![ColumnKind::Binary]).unwrap();
        assert!(matches!(m.predict(&narrow), Err(StatError::Shape { .. })));
        let other = FeatureMatrix::from_rows(&[vec![1.0, 0.0, 0.0, 0.0]], vec![ColumnKind::Binary; 4]).unwrap();
        assert!(matches!(m.predict(&other), Err(StatError::ColumnKindMismatch)));
    }

    #[test]
    fn checkpoints_round_trip_for_every_kind() {
        let (x, y) = xor_onehot();
        for kind in StatKind::ALL {
            let m = fit(kind, &x, &y, 2, &StatParams::default()).unwrap();
            let back = FittedModel::from_checkpoint(&m.to_checkpoint().unwrap()).unwrap();
            assert_eq!(back.predict_proba(&x).unwrap(), m.predict_proba(&x).unwrap(), "{kind}");
        }
    }

    #[test]
    fn kind_names_parse() {
        for kind in StatKind::ALL {
            assert_eq!(kind.as_str().parse::<StatKind>().unwrap(), kind);
        }
        assert!("svc".parse::<StatKind>().is_err());
    }
}
