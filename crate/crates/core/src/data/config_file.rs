use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NastError, Result};
use crate::model::ModelConfig;
use crate::train::TrainConfig;

/// Contents of a run configuration file: `[model]` and `[train]` sections of
/// `key = value` lines. Missing keys keep their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn parse(text: &str, location: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| NastError::Parse {
            location: location.to_string(),
            message: e.message().to_string(),
        })?;
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| NastError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }
}
