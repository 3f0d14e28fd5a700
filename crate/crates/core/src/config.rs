//! Run configuration: one TOML file, overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapter::Hyperparams;
use crate::analysis::{AnalysisOptions, ConsistencyParams, FailureFeature, DEFAULT_PREFIX_GRID};
use crate::data::{AccuracyMode, PosGroup, QuestionType};
use crate::knn::Metric;
use crate::stats::DEFAULT_BIN_SIZE;
use crate::synth::SynthConfig;

pub const DEFAULT_K_GRID: [usize; 5] = [1, 5, 10, 25, 50];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub adapter: String,
    pub out: Option<PathBuf>,
    /// Defaults to the adapter's preferred metric.
    pub metric: Option<Metric>,
    pub k: Vec<usize>,
    /// Seeds random binning and the failure-prediction split.
    pub seed: u64,
    pub qtype: Option<QuestionType>,
    pub workers: usize,
    pub accuracy: AccuracyMode,
    pub bin_size: usize,
    pub failure_feature: FailureFeature,
    pub prefix_grid: Vec<u8>,
    pub pos_groups: Vec<PosGroup>,
    pub image: ConsistencyParams,
    pub toy: Hyperparams,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            adapter: "toy".into(),
            out: None,
            metric: None,
            k: DEFAULT_K_GRID.to_vec(),
            seed: 0,
            qtype: None,
            workers: 1,
            accuracy: AccuracyMode::Consensus,
            bin_size: DEFAULT_BIN_SIZE,
            failure_feature: FailureFeature::QiDistance,
            prefix_grid: DEFAULT_PREFIX_GRID.to_vec(),
            pos_groups: PosGroup::ALL.to_vec(),
            image: ConsistencyParams::default(),
            toy: Hyperparams::default(),
            synth: SynthConfig::default(),
        }
    }
}

/// Values given on the command line. `None` keeps the file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub adapter: Option<String>,
    pub out: Option<PathBuf>,
    pub metric: Option<Metric>,
    pub k: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub qtype: Option<QuestionType>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn parse(path: &Path, text: &str) -> Result<RunConfig, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })
    }

    /// Reads `path`, returning the config and the raw file bytes.
    pub fn read(path: &Path) -> Result<(RunConfig, Vec<u8>), ConfigError> {
        let bytes = fs::read(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let text = String::from_utf8_lossy(&bytes);
        Ok((RunConfig::parse(path, &text)?, bytes))
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(v) = o.data {
            self.data = Some(v);
        }
        if let Some(v) = o.adapter {
            self.adapter = v;
        }
        if let Some(v) = o.out {
            self.out = Some(v);
        }
        if let Some(v) = o.metric {
            self.metric = Some(v);
        }
        if let Some(v) = o.k {
            self.k = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.qtype {
            self.qtype = Some(v);
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.k.is_empty() || self.k.contains(&0) {
            return fail("k must be a nonempty list of positive integers");
        }
        if self.workers == 0 {
            return fail("workers must be positive");
        }
        if self.bin_size == 0 {
            return fail("bin_size must be positive");
        }
        if self.prefix_grid.is_empty() || self.prefix_grid.iter().any(|p| *p > 100) {
            return fail("prefix_grid must hold percentages in 0..=100");
        }
        if self.toy.epochs == 0 || !(self.toy.learning_rate > 0.0) {
            return fail("toy.epochs and toy.learning_rate must be positive");
        }
        Ok(())
    }

    pub fn analysis_options(&self) -> AnalysisOptions {
        AnalysisOptions { accuracy: self.accuracy, qtype: self.qtype, bin_size: self.bin_size, bin_seed: self.seed }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let mut cfg = RunConfig::parse(Path::new("c.toml"), "adapter = \"const:yes\"\nk = [3]\nseed = 4\n").unwrap();
        cfg.apply(Overrides { k: Some(vec![7, 9]), ..Default::default() });
        assert_eq!(cfg.adapter, "const:yes");
        assert_eq!(cfg.k, [7, 9]);
        assert_eq!(cfg.seed, 4);
    }

    #[test]
    fn nested_tables_and_unknown_keys() {
        let cfg = RunConfig::parse(Path::new("c.toml"), "[image]\nmin_images = 5\n[toy]\nepochs = 10\n").unwrap();
        assert_eq!(cfg.image.min_images, 5);
        assert_eq!(cfg.image.band, (0.50, 0.55));
        assert_eq!(cfg.toy.epochs, 10);
        assert!(RunConfig::parse(Path::new("c.toml"), "nope = 1\n").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(Path::new("x"), &cfg.to_toml()).unwrap(), cfg);
    }
}
