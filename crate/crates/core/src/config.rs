//! TOML run configuration. Every table and key is optional.

use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{Lexicon, ParaphraseProvider, ProviderKind, RemoteParaphraser, RuleBasedParaphraser, RuleSet, DEFAULT_CAP};
use crate::encoder::{EncoderConfig, TrainingConfig};
use crate::ensemble::MetaOptions;
use crate::eval::DEFAULT_LOSS_THRESHOLD;
use crate::router::{RouterConfig, ServiceConfig};
use crate::statml::StatParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub train_fraction: f64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self { train_fraction: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSettings {
    pub provider: ProviderKind,
    pub cap_per_statement: usize,
    /// Lexicon file for the rule-based provider; the bundled one otherwise.
    pub lexicon: Option<PathBuf>,
    pub rules: RuleSet,
    pub endpoint: Option<String>,
    pub timeout_secs: u64,
}

impl Default for AugmentSettings {
    fn default() -> Self {
        Self {
            provider: ProviderKind::RuleBased,
            cap_per_statement: DEFAULT_CAP,
            lexicon: None,
            rules: RuleSet::default(),
            endpoint: None,
            timeout_secs: RemoteParaphraser::DEFAULT_TIMEOUT.as_secs(),
        }
    }
}

impl AugmentSettings {
    pub fn provider(&self, seed: u64) -> Result<ParaphraseProvider, ConfigError> {
        let cap = NonZeroUsize::new(self.cap_per_statement)
            .ok_or_else(|| ConfigError::Invalid("augment.cap_per_statement must be at least 1".into()))?;
        Ok(match self.provider {
            ProviderKind::RuleBased => {
                let lexicon = match &self.lexicon {
                    Some(p) => Lexicon::load(p).map_err(|e| ConfigError::Invalid(e.to_string()))?,
                    None => Lexicon::builtin(),
                };
                ParaphraseProvider::rule_based(RuleBasedParaphraser::new(lexicon, self.rules), cap, seed)
            }
            ProviderKind::Remote => {
                let endpoint = self
                    .endpoint
                    .as_deref()
                    .ok_or_else(|| ConfigError::Invalid("augment.endpoint is required for the remote provider".into()))?;
                let remote = RemoteParaphraser::new(endpoint, Duration::from_secs(self.timeout_secs));
                ParaphraseProvider::new(Box::new(remote), cap, seed)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSettings {
    /// Folds for cross-validated predictor ranking.
    pub rank_folds: usize,
    /// Folds for the out-of-fold matrix the meta-classifier is fitted on.
    pub stack_folds: usize,
    pub meta: MetaOptions,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        Self {
            rank_folds: 10,
            stack_folds: 5,
            meta: MetaOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub loss_threshold: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            loss_threshold: DEFAULT_LOSS_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub split: SplitSettings,
    pub augment: AugmentSettings,
    pub encoder: EncoderConfig,
    pub training: TrainingConfig,
    pub stat: StatParams,
    pub ensemble: EnsembleSettings,
    pub eval: EvalSettings,
    pub router: RouterConfig,
    pub service: ServiceConfig,
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Sets the run seed and every component seed derived from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.encoder.seed = seed;
        self.training.seed = seed;
        self.stat.seed = seed;
        self.ensemble.meta.params.seed = seed;
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
