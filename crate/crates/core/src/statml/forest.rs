//! Random forest of Gini CART trees.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_tensor, FeatureMatrix, Result, StatError};
use crate::checkpoint::Checkpoint;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features examined per split; `None` means ⌊√F⌋ (at least 1).
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    /// (feature, threshold, left child, right child); `None` for leaves.
    split: Option<(usize, f64, usize, usize)>,
    /// Class distribution of the training samples that reached the node.
    probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> &[f64] {
        let mut i = 0;
        while let Some((f, t, l, r)) = self.nodes[i].split {
            i = if row[f] <= t { l } else { r };
        }
        &self.nodes[i].probs
    }
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    y: &'a [usize],
    n_classes: usize,
    params: &'a ForestParams,
    max_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

fn gini(counts: &[f64], n: f64) -> f64 {
    1.0 - counts.iter().map(|c| (c / n) * (c / n)).sum::<f64>()
}

impl Builder<'_> {
    fn distribution(&self, idx: &[usize]) -> Vec<f64> {
        let mut counts = vec![0.0; self.n_classes];
        idx.iter().for_each(|&i| counts[self.y[i]] += 1.0);
        counts
    }

    /// Best (weighted child impurity, threshold) for feature `f`, if the
    /// feature is not constant on `idx`.
    fn best_threshold(&self, idx: &mut [usize], f: usize, total: &[f64]) -> Option<(f64, f64)> {
        idx.sort_by(|&a, &b| self.x.row(a)[f].total_cmp(&self.x.row(b)[f]));
        let n = idx.len() as f64;
        let mut left = vec![0.0; self.n_classes];
        let mut best: Option<(f64, f64)> = None;
        for k in 0..idx.len() - 1 {
            left[self.y[idx[k]]] += 1.0;
            let (v, next) = (self.x.row(idx[k])[f], self.x.row(idx[k + 1])[f]);
            if v == next {
                continue;
            }
            let nl = (k + 1) as f64;
            let right: Vec<f64> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
            let score = nl * gini(&left, nl) + (n - nl) * gini(&right, n - nl);
            if best.map_or(true, |(s, _)| score < s) {
                best = Some((score, v + (next - v) / 2.0));
            }
        }
        best
    }

    fn grow(&mut self, mut idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.distribution(&idx);
        let n = idx.len() as f64;
        let id = self.nodes.len();
        self.nodes.push(Node {
            split: None,
            probs: counts.iter().map(|c| c / n).collect(),
        });
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        let depth_ok = self.params.max_depth.map_or(true, |d| depth < d);
        if pure || !depth_ok || idx.len() < self.params.min_samples_split.max(2) {
            return id;
        }
        let mut features: Vec<usize> = (0..self.x.cols()).collect();
        features.shuffle(&mut self.rng);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut examined = 0;
        for f in features {
            if examined == self.max_features {
                break;
            }
            if let Some((score, threshold)) = self.best_threshold(&mut idx, f, &counts) {
                examined += 1;
                if best.map_or(true, |(s, _, _)| score < s) {
                    best = Some((score, f, threshold));
                }
            }
        }
        let Some((_, f, threshold)) = best else {
            return id;
        };
        let (l_idx, r_idx): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x.row(i)[f] <= threshold);
        let l = self.grow(l_idx, depth + 1);
        let r = self.grow(r_idx, depth + 1);
        self.nodes[id].split = Some((f, threshold, l, r));
        id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    n_classes: usize,
    n_features: usize,
    trees: Vec<Tree>,
}

impl RandomForest {
    /// Trees are grown in parallel, each from its own derived seed, so the
    /// result does not depend on the thread count.
    pub(super) fn fit(x: &FeatureMatrix, y: &[usize], n_classes: usize, params: &ForestParams, seed: u64) -> Self {
        let n = x.rows();
        let max_features = params
            .max_features
            .unwrap_or(((x.cols() as f64).sqrt().floor() as usize).max(1))
            .clamp(1, x.cols().max(1));
        let trees = (0..params.n_trees.max(1))
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[t as u64]));
                let idx: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let mut b = Builder {
                    x,
                    y,
                    n_classes,
                    params,
                    max_features,
                    rng,
                    nodes: Vec::new(),
                };
                b.grow(idx, 0);
                Tree { nodes: b.nodes }
            })
            .collect();
        Self {
            n_classes,
            n_features: x.cols(),
            trees,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn predict_proba_row(&self, row: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes];
        for tree in &self.trees {
            for (acc, v) in p.iter_mut().zip(tree.predict(row)) {
                *acc += v;
            }
        }
        let inv = 1.0 / self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v *= inv);
        p
    }

    pub(super) fn tensors(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = vec![("n_trees".to_string(), vec![self.trees.len() as f64])];
        for (t, tree) in self.trees.iter().enumerate() {
            let mut split = Vec::with_capacity(tree.nodes.len() * 4);
            let mut probs = Vec::with_capacity(tree.nodes.len() * self.n_classes);
            for node in &tree.nodes {
                match node.split {
                    Some((f, th, l, r)) => split.extend([f as f64, th, l as f64, r as f64]),
                    None => split.extend([-1.0, 0.0, 0.0, 0.0]),
                }
                probs.extend(&node.probs);
            }
            out.push((format!("tree{t}.split"), split));
            out.push((format!("tree{t}.probs"), probs));
        }
        out
    }

    pub(super) fn from_checkpoint(ck: &Checkpoint, c: usize, f: usize) -> Result<Self> {
        let n_trees = read_tensor(ck, "n_trees", 1)?[0] as usize;
        let mut trees = Vec::with_capacity(n_trees);
        for t in 0..n_trees {
            let split = ck.tensor(&format!("tree{t}.split"))?;
            let n_nodes = split.len() / 4;
            let probs = read_tensor(ck, &format!("tree{t}.probs"), n_nodes * c)?;
            let nodes = (0..n_nodes)
                .map(|i| {
                    let s = &split[i * 4..i * 4 + 4];
                    let node_split = if s[0] < 0.0 {
                        None
                    } else {
                        let (l, r) = (s[2] as usize, s[3] as usize);
                        if s[0] as usize >= f || l >= n_nodes || r >= n_nodes {
                            return Err(StatError::Matrix(format!("tree {t} node {i} is malformed")));
                        }
                        Some((s[0] as usize, s[1], l, r))
                    };
                    Ok(Node {
                        split: node_split,
                        probs: probs[i * c..(i + 1) * c].to_vec(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            trees.push(Tree { nodes });
        }
        Ok(Self {
            n_classes: c,
            n_features: f,
            trees,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statml::ColumnKind;

    #[test]
    fn single_stump_learns_identity_feature() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 2) as f64]).collect();
        let y: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let x = FeatureMatrix::from_rows(&rows, vec![ColumnKind::Binary]).unwrap();
        let params = ForestParams {
            n_trees: 1,
            max_depth: Some(1),
            ..ForestParams::default()
        };
        let m = RandomForest::fit(&x, &y, 2, &params, 4);
        assert_eq!(m.trees[0].nodes.len(), 3);
        for (r, &label) in y.iter().enumerate() {
            assert_eq!(m.predict_proba_row(x.row(r))[label], 1.0);
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64, (i % 3) as f64, (i * 13 % 5) as f64]).collect();
        let y: Vec<usize> = (0..40).map(|i| (i % 7 + i % 3) % 3).collect();
        let x = FeatureMatrix::from_rows(&rows, vec![ColumnKind::Continuous; 3]).unwrap();
        let p = ForestParams {
            n_trees: 15,
            ..ForestParams::default()
        };
        let a = RandomForest::fit(&x, &y, 3, &p, 9);
        let b = RandomForest::fit(&x, &y, 3, &p, 9);
        assert_eq!(a, b);
        let c = RandomForest::fit(&x, &y, 3, &p, 10);
        assert_ne!(a, c);
    }
}
