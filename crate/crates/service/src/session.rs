//! In-memory state behind the service: dataset, rule system and the cached
//! feature table of the training split.

use std::sync::{Arc, Mutex};

use graphrule_core::dataset::{
    load_annotations, load_dataset, load_rules, save_annotations, save_rules, Dataset, DatasetError,
    LoadOptions, LoadReport, ANNOTATIONS_FILE,
};
use graphrule_core::features::{FeatureConfig, FeatureTable, DEFAULT_SIZE_GUARD};
use graphrule_core::rules::RuleSystem;
use thiserror::Error;

use crate::config::{ConfigError, Mode, ServiceConfig};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug)]
pub struct Session {
    pub config: ServiceConfig,
    pub dataset: Option<Dataset>,
    pub load_report: Option<LoadReport>,
    pub rules: RuleSystem,
    table: Mutex<Option<Arc<FeatureTable>>>,
}

impl Session {
    /// Loads the dataset and any saved rules and annotations.
    pub fn open(config: ServiceConfig) -> Result<Self, SessionError> {
        config.validate()?;
        let rules = load_rules(&config.rules_file())?;
        let (dataset, load_report) = match (&config.dataset_path, config.format()?) {
            (Some(path), Some(format)) if config.mode != Mode::Inference => {
                let options = LoadOptions {
                    format,
                    seed: config.seed,
                    unlabeled: config.unlabeled,
                    labels_path: config.labels_path.clone(),
                };
                let (mut d, report) = load_dataset(path, &options)?;
                if let Some(ann) = load_annotations(&config.state_dir.join(ANNOTATIONS_FILE))? {
                    d.apply_annotations(&ann)?;
                }
                (Some(d), Some(report))
            }
            _ => (None, None),
        };
        Ok(Self {
            config,
            dataset,
            load_report,
            rules,
            table: Mutex::new(None),
        })
    }

    /// Session over an in-memory dataset; nothing is read from disk.
    pub fn in_memory(config: ServiceConfig, dataset: Option<Dataset>, rules: RuleSystem) -> Self {
        Self {
            config,
            dataset,
            load_report: None,
            rules,
            table: Mutex::new(None),
        }
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    /// Persists rules and annotations. Never writes in inference mode.
    pub fn save(&self) -> Result<(), DatasetError> {
        if self.mode() == Mode::Inference {
            return Ok(());
        }
        save_rules(&self.config.rules_file(), &self.rules)?;
        if let Some(d) = &self.dataset {
            save_annotations(&self.config.state_dir.join(ANNOTATIONS_FILE), &d.annotations())?;
        }
        Ok(())
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            max_edges: self.config.n_edges,
            size_guard: DEFAULT_SIZE_GUARD.max(self.config.n_edges),
        }
    }

    /// Feature table of the training split, built on first use.
    pub fn training_table(&self, dataset: &Dataset) -> Result<Arc<FeatureTable>, DatasetError> {
        let mut cached = self.table.lock().expect("feature table lock");
        if let Some(t) = cached.as_ref() {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(dataset.training_table(self.feature_config())?);
        *cached = Some(Arc::clone(&table));
        Ok(table)
    }

    /// Drops the cached table after the training split changed.
    pub fn invalidate_table(&mut self) {
        *self.table.get_mut().expect("feature table lock") = None;
    }
}
