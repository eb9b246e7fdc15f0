//! Multinomial logistic regression fitted by full-batch gradient descent.

use super::{normalize_log, read_tensor, FeatureMatrix, Result, StatParams};
use crate::checkpoint::Checkpoint;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    n_classes: usize,
    n_features: usize,
    /// F×C
    weights: Vec<f64>,
    bias: Vec<f64>,
    iterations: usize,
    gradient_norm: f64,
}

impl LogisticRegression {
    /// Minimises mean cross-entropy plus `l2/2 · ‖W‖²` (bias unpenalised) with
    /// step `1/L`, where `L = max_i(‖x_i‖² + 1)/2 + l2` bounds the Hessian.
    /// Stops when the gradient norm drops below `tolerance`.
    pub(super) fn fit(x: &FeatureMatrix, y: &[usize], n_classes: usize, params: &StatParams) -> Self {
        let (n, f, c) = (x.rows(), x.cols(), n_classes);
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|r| x.row(r).iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect())
            .collect();
        let max_sq = rows
            .iter()
            .map(|r| r.iter().map(|(_, v)| v * v).sum::<f64>() + 1.0)
            .fold(0.0, f64::max);
        let step = 1.0 / (0.5 * max_sq + params.l2);
        let inv_n = 1.0 / n as f64;

        let mut model = Self {
            n_classes: c,
            n_features: f,
            weights: vec![0.0; f * c],
            bias: vec![0.0; c],
            iterations: 0,
            gradient_norm: f64::INFINITY,
        };
        let mut gw = vec![0.0; f * c];
        let mut gb = vec![0.0; c];
        while model.iterations < params.max_iterations {
            for (g, w) in gw.iter_mut().zip(&model.weights) {
                *g = params.l2 * w;
            }
            gb.iter_mut().for_each(|g| *g = 0.0);
            for (row, &label) in rows.iter().zip(y) {
                let mut p = model.sparse_proba(row);
                p[label] -= 1.0;
                for (k, d) in p.iter().enumerate() {
                    gb[k] += d * inv_n;
                }
                for &(j, v) in row {
                    for (k, d) in p.iter().enumerate() {
                        gw[j * c + k] += v * d * inv_n;
                    }
                }
            }
            let norm = gw.iter().chain(&gb).map(|g| g * g).sum::<f64>().sqrt();
            model.gradient_norm = norm;
            if norm < params.tolerance {
                break;
            }
            for (w, g) in model.weights.iter_mut().zip(&gw) {
                *w -= step * g;
            }
            for (b, g) in model.bias.iter_mut().zip(&gb) {
                *b -= step * g;
            }
            model.iterations += 1;
        }
        model
    }

    fn sparse_proba(&self, row: &[(usize, f64)]) -> Vec<f64> {
        let c = self.n_classes;
        let mut z = self.bias.clone();
        for &(j, v) in row {
            for (k, zk) in z.iter_mut().enumerate() {
                *zk += v * self.weights[j * c + k];
            }
        }
        normalize_log(z)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Gradient-descent iterations performed during fitting.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn gradient_norm(&self) -> f64 {
        self.gradient_norm
    }

    pub fn predict_proba_row(&self, row: &[f64]) -> Vec<f64> {
        let sparse: Vec<(usize, f64)> = row.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        self.sparse_proba(&sparse)
    }

    pub(super) fn tensors(&self) -> Vec<(String, Vec<f64>)> {
        vec![
            ("weights".into(), self.weights.clone()),
            ("bias".into(), self.bias.clone()),
            ("fit_stats".into(), vec![self.iterations as f64, self.gradient_norm]),
        ]
    }

    pub(super) fn from_checkpoint(ck: &Checkpoint, c: usize, f: usize) -> Result<Self> {
        let stats = read_tensor(ck, "fit_stats", 2)?;
        Ok(Self {
            n_classes: c,
            n_features: f,
            weights: read_tensor(ck, "weights", f * c)?,
            bias: read_tensor(ck, "bias", c)?,
            iterations: stats[0] as usize,
            gradient_norm: stats[1],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statml::ColumnKind;

    #[test]
    fn converges_on_a_separable_continuous_problem() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0 - 1.0]).collect();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let x = FeatureMatrix::from_rows(&rows, vec![ColumnKind::Continuous]).unwrap();
        let m = LogisticRegression::fit(&x, &y, 2, &StatParams::default());
        for (r, &label) in y.iter().enumerate() {
            let p = m.predict_proba_row(x.row(r));
            assert_eq!(crate::encoder::tensor::argmax(&p), label);
        }
        assert!(m.weights[1] > 0.0 && m.weights[0] < 0.0);
    }

    #[test]
    fn stops_at_tolerance_when_reachable() {
        let x = FeatureMatrix::from_rows(
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![ColumnKind::Binary; 2],
        )
        .unwrap();
        let params = StatParams {
            l2: 1.0,
            ..StatParams::default()
        };
        let m = LogisticRegression::fit(&x, &[0, 1, 1, 0], 2, &params);
        assert!(m.iterations() < params.max_iterations);
        assert!(m.gradient_norm() < params.tolerance);
    }
}
