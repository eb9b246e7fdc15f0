use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::AttentionClassifier;
use super::tensor::argmax;
use super::EncoderError;
use crate::corpus::Corpus;
use crate::seed::derive_seed;

/// Mini-batch optimiser settings. Construct through [`TrainingConfig::new`]
/// or deserialization; both validate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrainingConfig")]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Rescale the mean batch gradient to at most this L2 norm.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(default)]
struct RawTrainingConfig {
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    momentum: f64,
    clip_norm: Option<f64>,
    seed: u64,
}

impl Default for RawTrainingConfig {
    fn default() -> Self {
        let d = TrainingConfig::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            momentum: d.momentum,
            clip_norm: d.clip_norm,
            seed: d.seed,
        }
    }
}

impl TryFrom<RawTrainingConfig> for TrainingConfig {
    type Error = EncoderError;

    fn try_from(r: RawTrainingConfig) -> Result<Self, EncoderError> {
        let cfg = TrainingConfig {
            epochs: r.epochs,
            batch_size: r.batch_size,
            learning_rate: r.learning_rate,
            momentum: r.momentum,
            clip_norm: r.clip_norm,
            seed: r.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 2,
            batch_size: 16,
            learning_rate: 0.05,
            momentum: 0.9,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn new(epochs: usize, batch_size: usize, learning_rate: f64, seed: u64) -> Result<Self, EncoderError> {
        let cfg = Self {
            epochs,
            batch_size,
            learning_rate,
            seed,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let fail = |m: String| Err(EncoderError::Training(m));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return fail(format!("clip_norm {c} must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training cross-entropy over the epoch's batches (dropout active).
    pub mean_loss: f64,
    /// Training-set accuracy measured after the epoch (dropout off).
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: AttentionClassifier,
    pub history: Vec<EpochStats>,
}

/// Seeded mini-batch gradient descent with momentum on mean cross-entropy.
///
/// Per-sample gradients are computed in parallel but summed in batch order,
/// so results are bit-identical across runs and thread counts.
pub fn train(
    mut model: AttentionClassifier,
    corpus: &Corpus,
    cfg: &TrainingConfig,
) -> Result<TrainingOutcome, EncoderError> {
    cfg.validate()?;
    if corpus.registry() != model.labels() {
        return Err(EncoderError::LabelMismatch);
    }
    let samples: Vec<(Vec<(usize, usize)>, usize)> = corpus
        .utterances()
        .iter()
        .zip(corpus.label_indices())
        .map(|(u, y)| Ok((model.active(&model.encode(&u.text)?)?, y)))
        .collect::<Result<_, EncoderError>>()?;
    if samples.is_empty() {
        return Err(EncoderError::Training("corpus is empty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut velocity = vec![0.0; model.num_parameters()];
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|&i| {
                    let (active, y) = &samples[i];
                    let seed = derive_seed(cfg.seed, &[epoch as u64, i as u64]);
                    model.sample_gradient(active, *y, Some(seed))
                })
                .collect();
            let mut grad = vec![0.0; model.num_parameters()];
            let mut batch_loss = 0.0;
            for (loss, g) in &results {
                batch_loss += loss;
                super::tensor::add_assign(&mut grad, g);
            }
            if !batch_loss.is_finite() {
                return Err(EncoderError::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += batch_loss;
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            if let Some(max_norm) = cfg.clip_norm {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max_norm {
                    let s = max_norm / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            for ((p, v), g) in model.parameters_mut().iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v + g;
                *p -= cfg.learning_rate * *v;
            }
        }
        let correct = samples
            .par_iter()
            .filter(|(active, y)| argmax(&model.probs_active(active)) == *y)
            .count();
        history.push(EpochStats {
            epoch: epoch + 1,
            mean_loss: loss_sum / samples.len() as f64,
            accuracy: correct as f64 / samples.len() as f64,
        });
    }
    Ok(TrainingOutcome { model, history })
}
