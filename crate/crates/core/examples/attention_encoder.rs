//! Scaled dot-product and multi-head attention on hand-sized matrices.

use ciai::encoder::{attention_weights, multi_head_attention, scaled_dot_attention, AttentionHeads, Matrix};

fn show(name: &str, m: &Matrix) {
    println!("{name}:");
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:7.4}")).collect();
        println!("  [{}]", row.join(" "));
    }
}

fn main() -> anyhow::Result<()> {
    let q = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
    let k = q.clone();
    let v = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
    // The last position is padding.
    let mask = [true, true, false];

    show("weights", &attention_weights(&q, &k, &mask)?);
    show("attention", &scaled_dot_attention(&q, &k, &v, &mask)?);

    let eye = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    let heads = AttentionHeads {
        w_q: vec![eye.clone(), eye.clone()],
        w_k: vec![eye.clone(), eye.clone()],
        w_v: vec![eye.clone(), eye.clone()],
        w_o: Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5], vec![0.5, 0.0], vec![0.0, 0.5]]),
    };
    show("two identical heads, averaged", &multi_head_attention(&q, &heads, &mask)?);
    Ok(())
}
