//! Linear discriminant analysis with a shared, shrunk covariance.

use nalgebra::{DMatrix, DVector};

use super::{class_counts, normalize_log, read_tensor, FeatureMatrix, Result, StatError};
use crate::checkpoint::Checkpoint;

#[derive(Debug, Clone, PartialEq)]
pub struct Lda {
    n_classes: usize,
    n_features: usize,
    /// C×F, `Σ⁻¹ μ_c`
    coef: Vec<f64>,
    /// `−½ μ_cᵀ Σ⁻¹ μ_c + ln π_c`; `-inf` for classes absent at fit time.
    intercept: Vec<f64>,
}

impl Lda {
    /// Pooled within-class covariance (divided by `n − K`) plus
    /// `shrinkage · I`, inverted through a Cholesky factorisation.
    pub(super) fn fit(x: &FeatureMatrix, y: &[usize], n_classes: usize, shrinkage: f64) -> Result<Self> {
        let (n, f) = (x.rows(), x.cols());
        let counts = class_counts(y, n_classes);
        let present = counts.iter().filter(|&&c| c > 0).count();
        let mut means = vec![DVector::<f64>::zeros(f); n_classes];
        for (r, &c) in y.iter().enumerate() {
            means[c] += DVector::from_row_slice(x.row(r));
        }
        for (m, &cnt) in means.iter_mut().zip(&counts) {
            if cnt > 0 {
                *m /= cnt as f64;
            }
        }
        let mut cov = DMatrix::<f64>::zeros(f, f);
        for (r, &c) in y.iter().enumerate() {
            let d = DVector::from_row_slice(x.row(r)) - &means[c];
            cov.ger(1.0, &d, &d, 1.0);
        }
        let dof = if n > present { n - present } else { n };
        cov /= dof as f64;
        for i in 0..f {
            cov[(i, i)] += shrinkage;
        }
        let chol = cov.cholesky().ok_or(StatError::SingularCovariance { shrinkage })?;
        let mut coef = Vec::with_capacity(n_classes * f);
        let mut intercept = Vec::with_capacity(n_classes);
        for (m, &cnt) in means.iter().zip(&counts) {
            if cnt == 0 {
                coef.extend(std::iter::repeat(0.0).take(f));
                intercept.push(f64::NEG_INFINITY);
                continue;
            }
            let w = chol.solve(m);
            intercept.push(-0.5 * m.dot(&w) + (cnt as f64 / n as f64).ln());
            coef.extend(w.iter());
        }
        Ok(Self {
            n_classes,
            n_features: f,
            coef,
            intercept,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn predict_proba_row(&self, row: &[f64]) -> Vec<f64> {
        let f = self.n_features;
        let scores = (0..self.n_classes)
            .map(|c| {
                self.intercept[c]
                    + self.coef[c * f..(c + 1) * f]
                        .iter()
                        .zip(row)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        normalize_log(scores)
    }

    pub(super) fn tensors(&self) -> Vec<(String, Vec<f64>)> {
        vec![
            ("coef".into(), self.coef.clone()),
            ("intercept".into(), self.intercept.clone()),
        ]
    }

    pub(super) fn from_checkpoint(ck: &Checkpoint, c: usize, f: usize) -> Result<Self> {
        Ok(Self {
            n_classes: c,
            n_features: f,
            coef: read_tensor(ck, "coef", c * f)?,
            intercept: read_tensor(ck, "intercept", c)?,
        })
    }
}
