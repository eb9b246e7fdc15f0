use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::model::AttentionClassifier;
use super::vocab::TokenSequence;
use super::EncoderError;
use crate::corpus::TaskLabel;

/// Relative errors are measured against `max(|analytic|, |numeric|, FLOOR)`
/// so that parameters with vanishing gradients are judged on absolute error.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientScope {
    /// A random subset spanning every weight family.
    All,
    /// Every classifier-head parameter; the encoder stays frozen.
    HeadOnly,
}

#[derive(Debug, Clone)]
pub struct GradientCheckOptions {
    pub epsilon: f64,
    /// Minimum number of parameters to probe for [`GradientScope::All`].
    pub min_parameters: usize,
    pub seed: u64,
    pub scope: GradientScope,
}

impl Default for GradientCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            min_parameters: 200,
            seed: 0,
            scope: GradientScope::All,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Largest relative error per weight family.
    pub per_family: BTreeMap<String, f64>,
    /// Tensor name and flat offset of the worst parameter.
    pub worst: (String, usize),
}

/// Compares analytic gradients with central finite differences
/// `(L(θ+ε) − L(θ−ε)) / 2ε` on one labelled sample, dropout disabled.
pub fn gradient_check(
    model: &AttentionClassifier,
    tokens: &TokenSequence,
    label: &TaskLabel,
    options: &GradientCheckOptions,
) -> Result<GradientCheckReport, EncoderError> {
    let eps = options.epsilon;
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(EncoderError::BadEpsilon(eps));
    }
    let y = model
        .labels()
        .index_of(label)
        .ok_or_else(|| EncoderError::Config(format!("label {label} is not in the model's registry")))?;
    let active = model.active(tokens)?;
    let (_, analytic) = model.sample_gradient(&active, y, None);
    let picks = choose_parameters(model, &active, options);

    let base = model.parameters();
    let errors: Vec<(usize, f64)> = picks
        .par_iter()
        .map(|&i| {
            let mut p = base.to_vec();
            p[i] = base[i] + eps;
            let up = model.loss_at(&p, &active, y);
            p[i] = base[i] - eps;
            let down = model.loss_at(&p, &active, y);
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[i];
            let denom = a.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
            (i, (a - numeric).abs() / denom)
        })
        .collect();

    let tensors = model.tensors();
    let owner = |i: usize| tensors.iter().find(|t| t.range().contains(&i)).expect("index inside layout");
    let mut per_family: BTreeMap<String, f64> = BTreeMap::new();
    let mut worst = (0usize, -1.0f64);
    for &(i, e) in &errors {
        let slot = per_family.entry(owner(i).family.to_string()).or_insert(0.0);
        *slot = slot.max(e);
        if e > worst.1 {
            worst = (i, e);
        }
    }
    Ok(GradientCheckReport {
        max_relative_error: worst.1.max(0.0),
        checked: errors.len(),
        per_family,
        worst: (owner(worst.0).name.clone(), worst.0),
    })
}

fn choose_parameters(model: &AttentionClassifier, active: &[(usize, usize)], options: &GradientCheckOptions) -> Vec<usize> {
    let tensors = model.tensors();
    if options.scope == GradientScope::HeadOnly {
        return tensors
            .iter()
            .filter(|t| t.family.starts_with("head_"))
            .flat_map(|t| t.range())
            .collect();
    }
    let d = model.config().d_model;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut picks = Vec::new();
    let total = model.num_parameters() as f64;
    for t in tensors {
        let candidates: Vec<usize> = if t.family == "embedding" {
            let mut rows: Vec<usize> = active.iter().map(|&(tok, _)| tok).collect();
            rows.sort_unstable();
            rows.dedup();
            rows.iter().flat_map(|r| t.offset + r * d..t.offset + (r + 1) * d).collect()
        } else {
            t.range().collect()
        };
        let share = (options.min_parameters as f64 * t.len() as f64 / total).ceil() as usize;
        let quota = share.max(4).min(candidates.len());
        picks.extend(sample(&mut rng, candidates.len(), quota).into_iter().map(|k| candidates[k]));
    }
    let mut rest: Vec<usize> = (0..model.num_parameters()).filter(|i| !picks.contains(i)).collect();
    while picks.len() < options.min_parameters && !rest.is_empty() {
        let k = sample(&mut rng, rest.len(), 1).index(0);
        picks.push(rest.swap_remove(k));
    }
    picks.sort_unstable();
    picks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelRegistry;
    use crate::encoder::{EncoderConfig, HeadInit, Vocabulary};

    fn model(layers: usize) -> AttentionClassifier {
        let vocab = Vocabulary::build(["tell me a joke", "how do i feel right now"], 1);
        let cfg = EncoderConfig {
            d_model: 8,
            n_heads: 2,
            d_k: 4,
            d_v: 4,
            n_layers: layers,
            d_ff: 12,
            max_len: 8,
            dropout_rate: 0.1,
            head_init: HeadInit::Uniform,
            seed: 5,
        };
        AttentionClassifier::new(cfg, vocab, LabelRegistry::standard()).unwrap()
    }

    #[test]
    fn full_check_covers_every_family() {
        let m = model(2);
        let seq = m.encode("tell me a joke").unwrap();
        let report = gradient_check(&m, &seq, &TaskLabel::new("JOKE").unwrap(), &GradientCheckOptions::default()).unwrap();
        assert!(report.checked >= 200);
        assert_eq!(report.per_family.len(), 15);
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn head_only_check() {
        let m = model(1);
        let seq = m.encode("how do i feel").unwrap();
        let opts = GradientCheckOptions {
            scope: GradientScope::HeadOnly,
            ..GradientCheckOptions::default()
        };
        let report = gradient_check(&m, &seq, &TaskLabel::new("EEG-EMOTIONS").unwrap(), &opts).unwrap();
        assert_eq!(report.checked, 8 * 7 + 7);
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }

    #[test]
    fn epsilon_range_is_enforced() {
        let m = model(1);
        let seq = m.encode("joke").unwrap();
        let label = TaskLabel::new("JOKE").unwrap();
        for eps in [1e-7, 1e-2] {
            let opts = GradientCheckOptions {
                epsilon: eps,
                ..GradientCheckOptions::default()
            };
            assert!(matches!(
                gradient_check(&m, &seq, &label, &opts),
                Err(EncoderError::BadEpsilon(_))
            ));
        }
    }
}
