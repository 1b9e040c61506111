//! Run configuration loaded from TOML. Every section and key is optional;
//! unknown keys are rejected. Command-line flags override file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Frequency;
use crate::error::{Error, Result};
use crate::forecaster::EsnConfig;
use crate::sweep::Grid;

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "ESN_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub frequency: Frequency,
    pub master_seed: u64,
    /// Worker threads; 0 uses every available core.
    pub parallelism: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            frequency: Frequency::Monthly,
            master_seed: 0,
            parallelism: 0,
        }
    }
}

impl RunConfig {
    pub fn threads(&self) -> usize {
        if self.parallelism > 0 {
            self.parallelism
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Rows in the sweep ranking table.
    pub top_k: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("results"),
            top_k: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlobalConfig {
    pub run: RunConfig,
    /// ESN settings for single-configuration commands, and the non-grid
    /// settings of a sweep. KPSS options live in `[esn.preprocess]`.
    pub esn: EsnConfig,
    pub grid: Grid,
    pub output: OutputConfig,
}

impl GlobalConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: GlobalConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GlobalConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Reads `explicit` if given, else the file named by [`CONFIG_ENV`],
    /// else returns the defaults.
    pub fn load(explicit: Option<&Path>) -> Result<Self> {
        if let Some(p) = explicit {
            return GlobalConfig::from_file(p);
        }
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => GlobalConfig::from_file(Path::new(&p)),
            _ => Ok(GlobalConfig::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.esn.validate()?;
        self.grid.validate()?;
        if self.output.top_k == 0 {
            return Err(Error::Config("output.top_k must be at least 1".into()));
        }
        Ok(())
    }
}
