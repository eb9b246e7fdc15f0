//! Naive Bayes family.

use super::{class_counts, normalize_log, read_tensor, FeatureMatrix, Result};
use crate::checkpoint::Checkpoint;

/// Laplace-smoothed class log-priors `ln((n_c + α) / (n + Cα))`.
fn smoothed_log_prior(y: &[usize], n_classes: usize, alpha: f64) -> Vec<f64> {
    let n = y.len() as f64;
    class_counts(y, n_classes)
        .iter()
        .map(|&c| ((c as f64 + alpha) / (n + n_classes as f64 * alpha)).ln())
        .collect()
}

/// Multinomial naive Bayes over nonnegative counts.
#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialNb {
    n_classes: usize,
    n_features: usize,
    log_prior: Vec<f64>,
    /// C×F, `ln((N_cj + α) / (N_c + αF))`
    log_theta: Vec<f64>,
}

impl MultinomialNb {
    pub(super) fn fit(x: &FeatureMatrix, y: &[usize], n_classes: usize, alpha: f64) -> Self {
        let f = x.cols();
        let mut counts = vec![0.0; n_classes * f];
        for (r, &c) in y.iter().enumerate() {
            for (acc, v) in counts[c * f..(c + 1) * f].iter_mut().zip(x.row(r)) {
                *acc += v;
            }
        }
        let mut log_theta = vec![0.0; n_classes * f];
        for c in 0..n_classes {
            let row = &counts[c * f..(c + 1) * f];
            let total: f64 = row.iter().sum::<f64>() + alpha * f as f64;
            for j in 0..f {
                log_theta[c * f + j] = ((row[j] + alpha) / total).ln();
            }
        }
        Self {
            n_classes,
            n_features: f,
            log_prior: smoothed_log_prior(y, n_classes, alpha),
            log_theta,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn predict_proba_row(&self, row: &[f64]) -> Vec<f64> {
        let f = self.n_features;
        let scores = (0..self.n_classes)
            .map(|c| {
                self.log_prior[c]
                    + row
                        .iter()
                        .zip(&self.log_theta[c * f..(c + 1) * f])
                        .filter(|(x, _)| **x != 0.0)
                        .map(|(x, t)| x * t)
                        .sum::<f64>()
            })
            .collect();
        normalize_log(scores)
    }

    pub(super) fn tensors(&self) -> Vec<(String, Vec<f64>)> {
        vec![
            ("log_prior".into(), self.log_prior.clone()),
            ("log_theta".into(), self.log_theta.clone()),
        ]
    }

    pub(super) fn from_checkpoint(ck: &Checkpoint, c: usize, f: usize) -> Result<Self> {
        Ok(Self {
            n_classes: c,
            n_features: f,
            log_prior: read_tensor(ck, "log_prior", c)?,
            log_theta: read_tensor(ck, "log_theta", c * f)?,
        })
    }
}

/// Bernoulli naive Bayes over binary presence features.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliNb {
    n_classes: usize,
    n_features: usize,
    log_prior: Vec<f64>,
    /// C×F, `ln p_cj` with `p_cj = (N_cj + α) / (N_c + 2α)`
    log_p: Vec<f64>,
    log_not_p: Vec<f64>,
}

impl BernoulliNb {
    pub(super) fn fit(x: &FeatureMatrix, y: &[usize], n_classes: usize, alpha: f64) -> Self {
        let f = x.cols();
        let counts = class_counts(y, n_classes);
        let mut present = vec![0.0; n_classes * f];
        for (r, &c) in y.iter().enumerate() {
            for (acc, v) in present[c * f..(c + 1) * f].iter_mut().zip(x.row(r)) {
                if *v > 0.0 {
                    *acc += 1.0;
                }
            }
        }
        let mut log_p = vec![0.0; n_classes * f];
        let mut log_not_p = vec![0.0; n_classes * f];
        for c in 0..n_classes {
            for j in 0..f {
                let p = (present[c * f + j] + alpha) / (counts[c] as f64 + 2.0 * alpha);
                log_p[c * f + j] = p.ln();
                log_not_p[c * f + j] = (1.0 - p).ln();
            }
        }
        Self {
            n_classes,
            n_features: f,
            log_prior: smoothed_log_prior(y, n_classes, alpha),
            log_p,
            log_not_p,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn predict_proba_row(&self, row: &[f64]) -> Vec<f64> {
        let f = self.n_features;
        let scores = (0..self.n_classes)
            .map(|c| {
                let mut s = self.log_prior[c];
                for (j, &v) in row.iter().enumerate() {
                    s += if v > 0.0 {
                        self.log_p[c * f + j]
                    } else {
                        self.log_not_p[c * f + j]
                    };
                }
                s
            })
            .collect();
        normalize_log(scores)
    }

    pub(super) fn tensors(&self) -> Vec<(String, Vec<f64>)> {
        vec![
            ("log_prior".into(), self.log_prior.clone()),
            ("log_p".into(), self.log_p.clone()),
            ("log_not_p".into(), self.log_not_p.clone()),
        ]
    }

    pub(super) fn from_checkpoint(ck: &Checkpoint, c: usize, f: usize) -> Result<Self> {
        Ok(Self {
            n_classes: c,
            n_features: f,
            log_prior: read_tensor(ck, "log_prior", c)?,
            log_p: read_tensor(ck, "log_p", c * f)?,
            log_not_p: read_tensor(ck, "log_not_p", c * f)?,
        })
    }
}

/// Gaussian naive Bayes with a per-feature variance floor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNb {
    n_classes: usize,
    n_features: usize,
    /// Empirical log-priors; classes absent at fit time get `-inf`.
    log_prior: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl GaussianNb {
    pub(super) fn fit(x: &FeatureMatrix, y: &[usize], n_classes: usize, var_floor: f64) -> Self {
        let f = x.cols();
        let counts = class_counts(y, n_classes);
        let mut mean = vec![0.0; n_classes * f];
        for (r, &c) in y.iter().enumerate() {
            for (m, v) in mean[c * f..(c + 1) * f].iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        for c in 0..n_classes {
            let n = counts[c].max(1) as f64;
            mean[c * f..(c + 1) * f].iter_mut().for_each(|m| *m /= n);
        }
        let mut var = vec![0.0; n_classes * f];
        for (r, &c) in y.iter().enumerate() {
            for j in 0..f {
                let d = x.row(r)[j] - mean[c * f + j];
                var[c * f + j] += d * d;
            }
        }
        for c in 0..n_classes {
            let n = counts[c].max(1) as f64;
            var[c * f..(c + 1) * f]
                .iter_mut()
                .for_each(|v| *v = (*v / n).max(var_floor));
        }
        let total = y.len() as f64;
        let log_prior = counts.iter().map(|&c| (c as f64 / total).ln()).collect();
        Self {
            n_classes,
            n_features: f,
            log_prior,
            mean,
            var,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn predict_proba_row(&self, row: &[f64]) -> Vec<f64> {
        let f = self.n_features;
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        let scores = (0..self.n_classes)
            .map(|c| {
                let mut s = self.log_prior[c];
                for (j, &v) in row.iter().enumerate() {
                    let var = self.var[c * f + j];
                    let d = v - self.mean[c * f + j];
                    s -= 0.5 * (ln_2pi + var.ln()) + d * d / (2.0 * var);
                }
                s
            })
            .collect();
        normalize_log(scores)
    }

    pub(super) fn tensors(&self) -> Vec<(String, Vec<f64>)> {
        vec![
            ("log_prior".into(), self.log_prior.clone()),
            ("mean".into(), self.mean.clone()),
            ("var".into(), self.var.clone()),
        ]
    }

    pub(super) fn from_checkpoint(ck: &Checkpoint, c: usize, f: usize) -> Result<Self> {
        Ok(Self {
            n_classes: c,
            n_features: f,
            log_prior: read_tensor(ck, "log_prior", c)?,
            mean: read_tensor(ck, "mean", c * f)?,
            var: read_tensor(ck, "var", c * f)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statml::ColumnKind;

    #[test]
    fn multinomial_matches_hand_computed_posterior() {
        // class 0 docs: [2,0], [1,1]; class 1 docs: [0,2], [1,3]
        let x = FeatureMatrix::from_rows(
            &[vec![2.0, 0.0], vec![1.0, 1.0], vec![0.0, 2.0], vec![1.0, 3.0]],
            vec![ColumnKind::Count; 2],
        )
        .unwrap();
        let m = MultinomialNb::fit(&x, &[0, 0, 1, 1], 2, 1.0);
        // class 0 totals [3,1] -> theta = [4/6, 2/6]; class 1 totals [1,5] -> [2/8, 6/8]
        // query [1,1]: score0 = .5 * 4/6 * 2/6, score1 = .5 * 2/8 * 6/8
        let s0 = 0.5 * (4.0 / 6.0) * (2.0 / 6.0);
        let s1 = 0.5 * (2.0 / 8.0) * (6.0 / 8.0);
        let p = m.predict_proba_row(&[1.0, 1.0]);
        assert!((p[0] - s0 / (s0 + s1)).abs() < 1e-12);
        assert!((p[1] - s1 / (s0 + s1)).abs() < 1e-12);
    }

    #[test]
    fn multinomial_never_assigns_zero() {
        let x = FeatureMatrix::from_rows(&[vec![5.0, 0.0], vec![0.0, 5.0]], vec![ColumnKind::Count; 2]).unwrap();
        let m = MultinomialNb::fit(&x, &[0, 1], 3, 1.0);
        let p = m.predict_proba_row(&[5.0, 0.0]);
        assert!(p.iter().all(|&v| v > 0.0), "{p:?}");
    }

    #[test]
    fn separated_classes_with_one_feature_each() {
        let x = FeatureMatrix::from_rows(
            &[vec![3.0, 0.0], vec![1.0, 0.0], vec![0.0, 4.0], vec![0.0, 5.0]],
            vec![ColumnKind::Count; 2],
        )
        .unwrap();
        let y = [0, 0, 1, 1];
        let m = MultinomialNb::fit(&x, &y, 2, 1.0);
        for r in 0..4 {
            let p = m.predict_proba_row(x.row(r));
            assert_eq!(crate::encoder::tensor::argmax(&p), y[r]);
        }
    }

    #[test]
    fn bernoulli_hand_example() {
        let x = FeatureMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]], vec![ColumnKind::Binary; 2])
            .unwrap();
        let m = BernoulliNb::fit(&x, &[0, 0, 1], 2, 1.0);
        // p0 = [(2+1)/4, (1+1)/4], p1 = [(0+1)/3, (1+1)/3]; priors 3/5, 2/5
        let s0 = 0.6 * 0.75 * (1.0 - 0.5);
        let s1 = 0.4 * (1.0 / 3.0) * (1.0 - 2.0 / 3.0);
        let p = m.predict_proba_row(&[1.0, 0.0]);
        assert!((p[0] - s0 / (s0 + s1)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_single_sample_class_uses_floor() {
        let x = FeatureMatrix::from_rows(&[vec![1.0], vec![3.0], vec![5.0]], vec![ColumnKind::Continuous]).unwrap();
        let m = GaussianNb::fit(&x, &[0, 0, 1], 2, 1e-9);
        assert_eq!(m.var[1], 1e-9);
        let p = m.predict_proba_row(&[5.0]);
        assert!(p[1] > 0.99);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
