//! TOML run configuration. Every table and field is optional.
//!
//! ```toml
//! [model]
//! dim = 16
//! enc_layers = 1
//!
//! [train]
//! lr = 2e-3
//! max_epochs = 50
//!
//! [annotation]
//! silence_db = -40.0
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sfatnet_core::model::ModelConfig;
use sfatnet_core::train::TrainConfig;

use crate::cache::AnnotationParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub annotation: AnnotationParams,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        Self::parse(&text).map_err(|message| Error::Config {
            path: path.to_path_buf(),
            message,
        })
    }

    /// Parses and validates a config document.
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.model.validate().map_err(|e| e.to_string())?;
        cfg.train.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_tables_fill_from_defaults() {
        let cfg = RunConfig::parse("[train]\nlr = 0.002\n[model]\nseed = 8\n").unwrap();
        assert_eq!(cfg.train.lr, 2e-3);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.model.seed, 8);
    }

    #[test]
    fn nested_tables_may_be_partial() {
        let cfg = RunConfig::parse("[annotation.pitch]\nswitch_prob = 0.02\n[train.optimizer]\nweight_decay = 0.0\n[train.loss_weights]\nvoicing = 0.5\n").unwrap();
        assert_eq!(cfg.annotation.pitch.switch_prob, 0.02);
        assert_eq!(cfg.annotation.pitch.fmin_hz, 60.0);
        assert_eq!(cfg.train.optimizer.weight_decay, 0.0);
        assert_eq!(cfg.train.loss_weights.voicing, 0.5);
        assert_eq!(cfg.train.loss_weights.formant, 0.3);
    }

    #[test]
    fn every_field_survives_a_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.model.seed = 5;
        cfg.train.optimizer.weight_decay = 0.03;
        cfg.annotation.pitch.switch_prob = 0.02;
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(RunConfig::parse("[train]\nbatch_size = 0\n").is_err());
        assert!(RunConfig::parse("[trian]\nlr = 1.0\n").is_err());
        assert!(RunConfig::parse("[model]\ndim = \"wide\"\n").is_err());
    }
}
