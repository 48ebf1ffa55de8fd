//! Scenario files: one TOML document describing the plant, trigger, codec, filter and run size.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::eds::CodecConfig;
use crate::error::{Error, Result};
use crate::etm::{EtmChannel, EtmConfig};
use crate::filter::FilterConfig;
use crate::system::SystemModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Trials whose per-cell estimates, trigger log and codewords are written out.
    #[serde(default = "default_export")]
    pub export_trials: usize,
}

fn default_export() -> usize {
    1
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            export_trials: default_export(),
        }
    }
}

/// Second trigger parameter set compared against `etm` by the monotonicity command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityConfig {
    pub channels: Vec<EtmChannel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    /// Grid size: cells `[0, horizon]^2`, current cell `(horizon, horizon)`.
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub model: SystemModel,
    pub etm: EtmConfig,
    pub codec: CodecConfig,
    pub filter: FilterConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub monotonicity: Option<MonotonicityConfig>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "at least one trial is required"));
        }
        self.model.validate(self.horizon)?;
        let channels = self.model.channel_count();
        self.etm.validate(channels, self.model.meas_dim)?;
        self.codec.validate(channels)?;
        self.filter.validate(&self.model)?;
        if let Some(mono) = &self.monotonicity {
            let alt = EtmConfig {
                channels: mono.channels.clone(),
                ..self.etm.clone()
            };
            alt.validate(channels, self.model.meas_dim)
                .map_err(|e| match e {
                    Error::Config { field, message } => {
                        Error::config(field.replacen("etm", "monotonicity", 1), message)
                    }
                    other => other,
                })?;
        }
        Ok(())
    }
}
