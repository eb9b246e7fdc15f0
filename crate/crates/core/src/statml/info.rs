//! Entropy and information gain over nominal sequences, in bits.

use std::collections::BTreeMap;

use super::{Result, StatError};

fn entropy_of_counts(counts: impl Iterator<Item = usize>, n: usize) -> f64 {
    let n = n as f64;
    -counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Empirical base-2 entropy `H(y)`.
pub fn entropy<T: Ord>(y: &[T]) -> Result<f64> {
    if y.is_empty() {
        return Err(StatError::Empty);
    }
    let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
    y.iter().for_each(|v| *counts.entry(v).or_default() += 1);
    Ok(entropy_of_counts(counts.into_values(), y.len()).max(0.0))
}

/// `H(y) − H(y | a)` from empirical frequencies, clamped to `[0, H(y)]`.
pub fn information_gain<Y: Ord, A: Ord>(y: &[Y], a: &[A]) -> Result<f64> {
    if y.len() != a.len() {
        return Err(StatError::LabelCount {
            labels: y.len(),
            rows: a.len(),
        });
    }
    let h_y = entropy(y)?;
    let mut groups: BTreeMap<&A, BTreeMap<&Y, usize>> = BTreeMap::new();
    for (yi, ai) in y.iter().zip(a) {
        *groups.entry(ai).or_default().entry(yi).or_default() += 1;
    }
    let n = y.len() as f64;
    let h_y_given_a: f64 = groups
        .into_values()
        .map(|g| {
            let size: usize = g.values().sum();
            size as f64 / n * entropy_of_counts(g.into_values(), size)
        })
        .sum();
    Ok((h_y - h_y_given_a).clamp(0.0, h_y))
}
