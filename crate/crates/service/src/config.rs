use std::path::PathBuf;

use graphrule_core::dataset::{DatasetFormat, RULES_FILE};
use graphrule_core::features::DEFAULT_MAX_EDGES;
use graphrule_core::learn::DEFAULT_MAX_DEPTH;
use graphrule_core::refine::DEFAULT_THRESHOLD;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STATE_DIR_ENV: &str = "GRAPHRULE_STATE_DIR";
pub const DEFAULT_PORT: u16 = 8732;
pub const DEFAULT_K: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Rule authoring on a labeled dataset.
    Simple,
    /// Simple mode plus label bootstrapping on unlabeled rows.
    Advanced,
    /// Read-only rule application.
    Inference,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Simple => "simple",
            Mode::Advanced => "advanced",
            Mode::Inference => "inference",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub mode: Mode,
    pub dataset_path: Option<PathBuf>,
    /// Guessed from the dataset extension when absent.
    pub dataset_format: Option<DatasetFormat>,
    /// CoNLL-U label sidecar.
    pub labels_path: Option<PathBuf>,
    pub unlabeled: bool,
    pub state_dir: PathBuf,
    /// Rules file for inference mode; defaults to `state_dir/rules.json`.
    pub rules_path: Option<PathBuf>,
    pub port: u16,
    pub n_edges: usize,
    pub suggestion_k: usize,
    pub refine_threshold: f64,
    pub seed: u64,
    pub max_depth: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{0} mode needs a dataset")]
    MissingDataset(&'static str),
    #[error("inference mode needs an existing rules file, {0} not found")]
    MissingRules(PathBuf),
    #[error("cannot tell the format of {0}; pass it explicitly")]
    UnknownFormat(PathBuf),
    #[error("refine threshold must be within [0, 1], got {0}")]
    Threshold(String),
}

impl ServiceConfig {
    pub fn new(mode: Mode, state_dir: impl Into<PathBuf>) -> Self {
        Self {
            mode,
            dataset_path: None,
            dataset_format: None,
            labels_path: None,
            unlabeled: mode == Mode::Advanced,
            state_dir: state_dir.into(),
            rules_path: None,
            port: DEFAULT_PORT,
            n_edges: DEFAULT_MAX_EDGES,
            suggestion_k: DEFAULT_K,
            refine_threshold: DEFAULT_THRESHOLD,
            seed: 0,
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }

    pub fn with_dataset(mut self, path: impl Into<PathBuf>) -> Self {
        self.dataset_path = Some(path.into());
        self
    }

    /// File rules are read from, and written to outside inference mode.
    pub fn rules_file(&self) -> PathBuf {
        self.rules_path
            .clone()
            .unwrap_or_else(|| self.state_dir.join(RULES_FILE))
    }

    pub fn format(&self) -> Result<Option<DatasetFormat>, ConfigError> {
        match (&self.dataset_path, self.dataset_format) {
            (None, _) => Ok(None),
            (Some(_), Some(f)) => Ok(Some(f)),
            (Some(p), None) => DatasetFormat::from_path(p)
                .map(Some)
                .ok_or_else(|| ConfigError::UnknownFormat(p.clone())),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.refine_threshold) {
            return Err(ConfigError::Threshold(self.refine_threshold.to_string()));
        }
        match self.mode {
            Mode::Inference => {
                let rules = self.rules_file();
                if !rules.is_file() {
                    return Err(ConfigError::MissingRules(rules));
                }
            }
            m => {
                if self.dataset_path.is_none() {
                    return Err(ConfigError::MissingDataset(m.as_str()));
                }
            }
        }
        self.format().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_requirements() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            ServiceConfig::new(Mode::Simple, dir.path()).validate(),
            Err(ConfigError::MissingDataset("simple"))
        );
        assert!(matches!(
            ServiceConfig::new(Mode::Inference, dir.path()).validate(),
            Err(ConfigError::MissingRules(_))
        ));
        std::fs::write(dir.path().join(RULES_FILE), "{}").unwrap();
        assert_eq!(ServiceConfig::new(Mode::Inference, dir.path()).validate(), Ok(()));
        let c = ServiceConfig::new(Mode::Simple, dir.path()).with_dataset("corpus.data");
        assert!(matches!(c.validate(), Err(ConfigError::UnknownFormat(_))));
        let c = ServiceConfig::new(Mode::Simple, dir.path()).with_dataset("corpus.jsonl");
        assert_eq!(c.validate(), Ok(()));
    }
}
