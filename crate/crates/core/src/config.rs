//! Run configuration: one structured file covering datasets, rewards,
//! optimization, backend, decoding, and output paths. A toy run is fully
//! reproducible from (config, seed).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::HttpBackendConfig;
use crate::corpus::{CorpusError, PromptTemplate, TemplateName, TemplateSet};
use crate::grpo::GrpoConfig;
use crate::reward::RewardConfig;
use crate::rollout::DecodingConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Toy,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub http: HttpBackendConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Toy,
            http: HttpBackendConfig::default(),
        }
    }
}

/// Dataset sources: file paths, or synthetic toy sizes when paths are
/// absent and the backend is the toy policy.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub synthetic_train: usize,
    pub synthetic_dev: usize,
    pub synthetic_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Passes over the training set; used when `max_steps` is unset.
    pub epochs: usize,
    /// Optimizer steps; overrides the epoch count when set.
    pub max_steps: Option<usize>,
    /// Instances per optimizer step.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Dev evaluation and checkpoint cadence, in steps.
    pub eval_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            max_steps: None,
            batch_size: 4,
            learning_rate: 1e-6,
            eval_interval: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub log_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            log_dir: PathBuf::from("runs/default"),
        }
    }
}

/// Template override paths; built-in texts are used where unset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateOverrides {
    pub rag_qa: Option<PathBuf>,
    pub closed_book: Option<PathBuf>,
    pub cot: Option<PathBuf>,
    pub rational_extraction: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub reward: RewardConfig,
    pub grpo: GrpoConfig,
    pub backend: BackendConfig,
    pub decoding: DecodingConfig,
    pub train: TrainConfig,
    pub paths: PathsConfig,
    pub templates: TemplateOverrides,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            dataset: DatasetConfig::default(),
            reward: RewardConfig::default(),
            grpo: GrpoConfig::default(),
            backend: BackendConfig::default(),
            decoding: DecodingConfig::default(),
            train: TrainConfig::default(),
            paths: PathsConfig::default(),
            templates: TemplateOverrides::default(),
        }
    }
}

impl RunConfig {
    /// Defaults for the synthetic desk-scale run: 200 training instances,
    /// 500 optimizer steps, and groups large enough for meaningful
    /// relative comparison.
    pub fn toy_default() -> Self {
        let mut cfg = Self::default();
        cfg.dataset.synthetic_train = 200;
        cfg.dataset.synthetic_dev = 32;
        cfg.dataset.synthetic_test = 64;
        cfg.grpo.group_size = 128;
        cfg.train.max_steps = Some(500);
        cfg.train.batch_size = 4;
        cfg.train.learning_rate = 15.0;
        cfg.train.eval_interval = 50;
        cfg.decoding.max_new_tokens = 16;
        cfg.paths.log_dir = PathBuf::from("runs/toy");
        cfg
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: Self = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.reward
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.grpo
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.reward.eps_std != self.grpo.eps_std {
            return Err(ConfigError::Invalid(format!(
                "reward.eps_std ({}) and grpo.eps_std ({}) must agree",
                self.reward.eps_std, self.grpo.eps_std
            )));
        }
        if self.train.batch_size == 0 {
            return Err(ConfigError::Invalid(
                "train.batch_size must be >= 1".to_string(),
            ));
        }
        if self.train.learning_rate <= 0.0 {
            return Err(ConfigError::Invalid(
                "train.learning_rate must be > 0".to_string(),
            ));
        }
        match self.backend.kind {
            BackendKind::Toy => {
                if self.dataset.train.is_none() && self.dataset.synthetic_train == 0 {
                    return Err(ConfigError::Invalid(
                        "toy runs need dataset.train or dataset.synthetic_train > 0".to_string(),
                    ));
                }
            }
            BackendKind::Http => {
                if self.backend.http.endpoint.is_empty() {
                    return Err(ConfigError::Invalid(
                        "http backend needs an endpoint".to_string(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Set both std-clip fields together (they describe the same quantity).
    pub fn set_eps_std(&mut self, eps_std: f64) {
        self.reward.eps_std = eps_std;
        self.grpo.eps_std = eps_std;
    }

    /// Resolve template overrides into a template set.
    pub fn template_set(&self) -> Result<TemplateSet, ConfigError> {
        let mut set = TemplateSet::default();
        let overrides = [
            (TemplateName::RagQa, &self.templates.rag_qa),
            (TemplateName::ClosedBook, &self.templates.closed_book),
            (TemplateName::Cot, &self.templates.cot),
            (
                TemplateName::RationalExtraction,
                &self.templates.rational_extraction,
            ),
        ];
        for (name, path) in overrides {
            if let Some(p) = path {
                set.set(PromptTemplate::from_file(name, p)?);
            }
        }
        Ok(set)
    }

    /// Total optimizer steps implied by the config for `n_train` instances.
    pub fn total_steps(&self, n_train: usize) -> usize {
        match self.train.max_steps {
            Some(s) => s,
            None => {
                let per_epoch = n_train.div_ceil(self.train.batch_size);
                (self.train.epochs * per_epoch).max(1)
            }
        }
    }
}
