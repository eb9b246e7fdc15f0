//! Scaled dot-product attention and multi-head self-attention.

use super::tensor::{matmul, matmul_nt, softmax_in_place, Matrix};
use super::EncoderError;

/// Row-stochastic attention weights `softmax(QKᵀ/√d_k)` (n×n, flattened).
/// Masked keys get weight exactly 0.
pub(crate) fn attention_probs(q: &[f64], k: &[f64], n: usize, d_k: usize, mask: &[bool]) -> Vec<f64> {
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut scores = matmul_nt(q, n, d_k, k, n);
    for row in scores.chunks_mut(n) {
        for (s, &keep) in row.iter_mut().zip(mask) {
            *s = if keep { *s * scale } else { f64::NEG_INFINITY };
        }
        softmax_in_place(row);
    }
    scores
}

fn check_mask(mask: &[bool], n: usize) -> Result<(), EncoderError> {
    if mask.len() != n {
        return Err(EncoderError::Shape(format!("mask has length {}, expected {n}", mask.len())));
    }
    if !mask.iter().any(|&m| m) {
        return Err(EncoderError::AllMasked);
    }
    Ok(())
}

/// Attention weight matrix for the given queries, keys and key mask.
pub fn attention_weights(q: &Matrix, k: &Matrix, mask: &[bool]) -> Result<Matrix, EncoderError> {
    if q.cols() != k.cols() || q.rows() != k.rows() {
        return Err(EncoderError::Shape(format!(
            "Q is {}x{}, K is {}x{}",
            q.rows(),
            q.cols(),
            k.rows(),
            k.cols()
        )));
    }
    if q.cols() == 0 {
        return Err(EncoderError::Shape("d_k must be at least 1".into()));
    }
    let n = q.rows();
    check_mask(mask, n)?;
    Ok(Matrix::from_vec(n, n, attention_probs(q.data(), k.data(), n, q.cols(), mask)))
}

/// `softmax(QKᵀ/√d_k)V` with masked key positions excluded from the softmax.
pub fn scaled_dot_attention(q: &Matrix, k: &Matrix, v: &Matrix, mask: &[bool]) -> Result<Matrix, EncoderError> {
    if v.rows() != k.rows() {
        return Err(EncoderError::Shape(format!("V has {} rows, K has {}", v.rows(), k.rows())));
    }
    let weights = attention_weights(q, k, mask)?;
    Ok(weights.matmul(v))
}

/// Projection weights of one multi-head attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHeads {
    /// per head, d_model×d_k
    pub w_q: Vec<Matrix>,
    /// per head, d_model×d_k
    pub w_k: Vec<Matrix>,
    /// per head, d_model×d_v
    pub w_v: Vec<Matrix>,
    /// (heads·d_v)×d_model
    pub w_o: Matrix,
}

impl AttentionHeads {
    fn check(&self, d_model: usize) -> Result<(usize, usize), EncoderError> {
        let h = self.w_q.len();
        if h == 0 || self.w_k.len() != h || self.w_v.len() != h {
            return Err(EncoderError::Shape("head counts of W^Q, W^K, W^V differ or are zero".into()));
        }
        let d_k = self.w_q[0].cols();
        let d_v = self.w_v[0].cols();
        let ok = self.w_q.iter().chain(&self.w_k).all(|w| w.rows() == d_model && w.cols() == d_k)
            && self.w_v.iter().all(|w| w.rows() == d_model && w.cols() == d_v)
            && self.w_o.rows() == h * d_v
            && self.w_o.cols() == d_model;
        if !ok {
            return Err(EncoderError::Shape("projection shapes disagree with d_model, d_k, d_v".into()));
        }
        Ok((d_k, d_v))
    }
}

/// `Concat(head_1..head_h) W^O` with `head_i = Attention(X W^Q_i, X W^K_i, X W^V_i)`.
pub fn multi_head_attention(x: &Matrix, weights: &AttentionHeads, mask: &[bool]) -> Result<Matrix, EncoderError> {
    let n = x.rows();
    let d_model = x.cols();
    let (_, d_v) = weights.check(d_model)?;
    let h = weights.w_q.len();
    let mut concat = vec![0.0; n * h * d_v];
    for head in 0..h {
        let q = x.matmul(&weights.w_q[head]);
        let k = x.matmul(&weights.w_k[head]);
        let v = x.matmul(&weights.w_v[head]);
        let out = scaled_dot_attention(&q, &k, &v, mask)?;
        for i in 0..n {
            concat[i * h * d_v + head * d_v..i * h * d_v + (head + 1) * d_v].copy_from_slice(out.row(i));
        }
    }
    Ok(Matrix::from_vec(
        n,
        d_model,
        matmul(&concat, n, h * d_v, weights.w_o.data(), d_model),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_key_returns_its_value() {
        let q = Matrix::from_rows(&[vec![0.3, -1.2]]);
        let k = Matrix::from_rows(&[vec![2.0, 0.5]]);
        let v = Matrix::from_rows(&[vec![4.0, -7.0, 1.5]]);
        let out = scaled_dot_attention(&q, &k, &v, &[true]).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn identical_keys_average_unmasked_values() {
        let q = Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5], vec![0.0, 1.0]]);
        let k = Matrix::from_rows(&[vec![0.7, 0.1], vec![0.7, 0.1], vec![0.7, 0.1]]);
        let v = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![100.0, 100.0]]);
        let out = scaled_dot_attention(&q, &k, &v, &[true, true, false]).unwrap();
        for r in 0..3 {
            assert!((out.get(r, 0) - 2.0).abs() < 1e-12);
            assert!((out.get(r, 1) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fully_masked_is_an_error() {
        let m = Matrix::from_rows(&[vec![1.0], vec![2.0]]);
        assert!(matches!(
            scaled_dot_attention(&m, &m, &m, &[false, false]),
            Err(EncoderError::AllMasked)
        ));
        assert!(matches!(scaled_dot_attention(&m, &m, &m, &[true]), Err(EncoderError::Shape(_))));
    }

    #[test]
    fn single_head_with_identity_output_is_plain_attention() {
        let x = Matrix::from_rows(&[vec![0.1, 0.4], vec![-0.3, 0.9], vec![0.5, -0.2]]);
        let w_q = Matrix::from_rows(&[vec![0.2, -0.1], vec![0.3, 0.8]]);
        let w_k = Matrix::from_rows(&[vec![-0.5, 0.4], vec![0.1, 0.2]]);
        let w_v = Matrix::from_rows(&[vec![1.0, 0.3], vec![-0.7, 0.6]]);
        let heads = AttentionHeads {
            w_q: vec![w_q.clone()],
            w_k: vec![w_k.clone()],
            w_v: vec![w_v.clone()],
            w_o: Matrix::identity(2),
        };
        let mask = [true, true, true];
        let got = multi_head_attention(&x, &heads, &mask).unwrap();
        let want = scaled_dot_attention(&x.matmul(&w_q), &x.matmul(&w_k), &x.matmul(&w_v), &mask).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn two_heads_concatenate_in_order() {
        let x = Matrix::from_rows(&[vec![0.1, 0.4], vec![-0.3, 0.9]]);
        let w = |a: f64, b: f64| Matrix::from_rows(&[vec![a], vec![b]]);
        let heads = AttentionHeads {
            w_q: vec![w(0.2, 0.1), w(-0.4, 0.3)],
            w_k: vec![w(0.5, -0.2), w(0.3, 0.3)],
            w_v: vec![w(1.0, 0.0), w(0.0, 1.0)],
            w_o: Matrix::identity(2),
        };
        let mask = [true, true];
        let got = multi_head_attention(&x, &heads, &mask).unwrap();
        for head in 0..2 {
            let single = scaled_dot_attention(
                &x.matmul(&heads.w_q[head]),
                &x.matmul(&heads.w_k[head]),
                &x.matmul(&heads.w_v[head]),
                &mask,
            )
            .unwrap();
            for r in 0..2 {
                assert_eq!(got.get(r, head), single.get(r, 0));
            }
        }
    }
}
