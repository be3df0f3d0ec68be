//! Run configuration files.
//!
//! ```json
//! {"space": "../spaces/table2.json",
//!  "optimizer": {"kind": "gp_bo", "budget": 15, "n0": 5, "seed": 42, "acquisition": "ei"},
//!  "objective": {"kind": "mock_ser", "noise_sd": 0.01},
//!  "repeats": 20, "out_dir": "runs/"}
//! ```
//!
//! Races list several specs under `"optimizers"` instead. Relative paths are
//! resolved against the config file's directory first, then the working
//! directory. Synthetic objectives may omit `space` to use their own.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::OptimizerSpec;
use crate::metrics::DEFAULT_THRESHOLDS;
use crate::objective::ObjectiveSpec;
use crate::space::{SearchSpace, SpaceError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("space {path}: {source}")]
    Space {
        path: String,
        #[source]
        source: SpaceError,
    },
}

fn default_repeats() -> usize {
    1
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_thresholds() -> Vec<f64> {
    DEFAULT_THRESHOLDS.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub optimizers: Vec<OptimizerSpec>,
    pub objective: ObjectiveSpec,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

/// A parsed config plus the directory relative paths are resolved against.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json_str(doc: &str, origin: &str) -> Result<Self, ConfigError> {
        let c: RunConfig =
            serde_json::from_str(doc).map_err(|source| ConfigError::Parse { path: origin.to_string(), source })?;
        c.check()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
        let doc = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        let config = Self::from_json_str(&doc, &path.display().to_string())?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, base_dir })
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.optimizer.is_some() && !self.optimizers.is_empty() {
            return Err(ConfigError::Invalid("give either `optimizer` or `optimizers`, not both".into()));
        }
        if self.specs().is_empty() {
            return Err(ConfigError::Invalid("no optimizer configured".into()));
        }
        if self.repeats == 0 {
            return Err(ConfigError::Invalid("repeats must be at least 1".into()));
        }
        if self.thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(ConfigError::Invalid("thresholds must be strictly ascending".into()));
        }
        if self.jobs == Some(0) {
            return Err(ConfigError::Invalid("jobs must be at least 1".into()));
        }
        for s in self.specs() {
            s.validate().map_err(|e| ConfigError::Invalid(format!("optimizer `{}`: {e}", s.display_name())))?;
        }
        Ok(())
    }

    pub fn specs(&self) -> Vec<OptimizerSpec> {
        match &self.optimizer {
            Some(s) => vec![s.clone()],
            None => self.optimizers.clone(),
        }
    }

    /// Replaces the seed of every spec (repeats still offset from it).
    pub fn override_seed(&mut self, seed: u64) {
        self.for_each_spec(|s| s.seed = seed);
    }

    pub fn override_budget(&mut self, budget: usize) {
        self.for_each_spec(|s| s.budget = budget);
    }

    fn for_each_spec(&mut self, mut f: impl FnMut(&mut OptimizerSpec)) {
        if let Some(s) = self.optimizer.as_mut() {
            f(s);
        }
        self.optimizers.iter_mut().for_each(f);
    }
}

/// `path` relative to `base_dir` if it exists there, else as given.
pub fn resolve(base_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    let candidate = base_dir.join(path);
    if candidate.exists() {
        candidate
    } else {
        path.to_path_buf()
    }
}

impl LoadedConfig {
    pub fn space(&self) -> Result<SearchSpace, ConfigError> {
        match &self.config.space {
            Some(p) => {
                let path = resolve(&self.base_dir, p);
                SearchSpace::load(&path).map_err(|source| ConfigError::Space { path: path.display().to_string(), source })
            }
            None => self
                .config
                .objective
                .synthetic()
                .map(|o| o.kind.space())
                .ok_or_else(|| ConfigError::Invalid("external objectives need an explicit `space`".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RACE: &str = r#"{
        "optimizers": [{"kind": "gp_bo", "budget": 15, "seed": 1}, {"kind": "random", "budget": 15, "seed": 1}],
        "objective": {"kind": "mock_ser", "noise_sd": 0.01},
        "repeats": 3
    }"#;

    #[test]
    fn parses_race_config_with_defaults() {
        let c = RunConfig::from_json_str(RACE, "race.json").unwrap();
        assert_eq!(c.specs().len(), 2);
        assert_eq!(c.thresholds, DEFAULT_THRESHOLDS);
        assert_eq!(c.out_dir, PathBuf::from("runs"));
        let loaded = LoadedConfig { config: c, base_dir: PathBuf::new() };
        assert_eq!(loaded.space().unwrap(), crate::space::table2_space());
    }

    #[test]
    fn overrides_apply_to_every_spec() {
        let mut c = RunConfig::from_json_str(RACE, "race.json").unwrap();
        c.override_seed(7);
        c.override_budget(4);
        assert!(c.specs().iter().all(|s| s.seed == 7 && s.budget == 4));
    }

    #[test]
    fn rejects_bad_configs() {
        for doc in [
            r#"{"objective": {"kind": "mock_ser"}}"#,
            r#"{"optimizer": {"kind": "tpe", "budget": 0}, "objective": {"kind": "mock_ser"}}"#,
            r#"{"optimizer": {"kind": "tpe", "budget": 3}, "objective": {"kind": "mock_ser"}, "repeats": 0}"#,
            r#"{"optimizer": {"kind": "tpe", "budget": 3}, "objective": {"kind": "mock_ser"}, "thresholds": [0.9, 0.8]}"#,
            r#"{"optimizer": {"kind": "tpe", "budget": 3}, "objective": {"kind": "mock_ser"}, "extra": 1}"#,
            r#"{"optimizer": {"kind": "tpe", "budget": 3}, "objective": {"kind": "nope"}}"#,
        ] {
            assert!(RunConfig::from_json_str(doc, "x").is_err(), "{doc}");
        }
        let ext = RunConfig::from_json_str(r#"{"optimizer": {"kind": "tpe", "budget": 3}, "objective": {"kind": "external", "command": "w"}}"#, "x").unwrap();
        assert!(LoadedConfig { config: ext, base_dir: PathBuf::new() }.space().is_err());
    }

    #[test]
    fn missing_file_names_the_path() {
        let e = RunConfig::load(Path::new("/nonexistent/cfg.json")).unwrap_err();
        assert!(e.to_string().contains("/nonexistent/cfg.json"));
    }
}
