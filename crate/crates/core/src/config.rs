//! Run configuration, loaded from TOML or JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::AnalysisConfig;
use crate::features::{CategoryThresholds, Target};
use crate::ingest;
use crate::noise::NoiseSpec;
use crate::preprocess::FilterConfig;
use crate::regression::CvConfig;
use crate::scsa::ChiGridConfig;
use crate::synth::SynthConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Preprocess,
    Fiducials,
    Scsa,
    Features,
    TrainEval,
    NoiseTest,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Preprocess,
        Stage::Fiducials,
        Stage::Scsa,
        Stage::Features,
        Stage::TrainEval,
        Stage::NoiseTest,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Preprocess => "preprocess",
            Stage::Fiducials => "fiducials",
            Stage::Scsa => "scsa",
            Stage::Features => "features",
            Stage::TrainEval => "train_eval",
            Stage::NoiseTest => "noise_test",
        }
    }

    /// Directory under the output root holding this stage's files.
    pub fn dir(&self) -> &'static str {
        match self {
            Stage::TrainEval => "train",
            Stage::NoiseTest => "noise",
            s => s.as_str(),
        }
    }
}

/// Everything a run needs. The top-level `seed` is the only seed: it
/// replaces the seeds inside `cv` and `noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Directory of records; when absent the synthetic set is generated
    /// into `<out_dir>/data`.
    pub input_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub stages: Vec<Stage>,
    pub min_record_s: f64,
    pub window_s: f64,
    pub margin_s: f64,
    pub targets: Vec<Target>,
    pub filter: FilterConfig,
    pub scsa: ChiGridConfig,
    pub categories: CategoryThresholds,
    pub cv: CvConfig,
    pub synth: SynthConfig,
    pub noise: NoiseSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            input_dir: None,
            out_dir: PathBuf::from("out"),
            stages: Stage::ALL.to_vec(),
            min_record_s: ingest::MIN_RECORD_S,
            window_s: ingest::WINDOW_S,
            margin_s: ingest::MARGIN_S,
            targets: vec![Target::Sbp, Target::Dbp],
            filter: FilterConfig::default(),
            scsa: ChiGridConfig::default(),
            categories: CategoryThresholds::default(),
            cv: CvConfig::default(),
            synth: SynthConfig::default(),
            noise: NoiseSpec::default(),
        }
    }
}

impl RunConfig {
    /// Reads `.toml` or `.json` (by extension; anything else is tried as TOML).
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parse_err = |message: String| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        };
        let cfg: RunConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?,
            _ => toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.stages.is_empty() {
            return bad("no stages selected".into());
        }
        if self.targets.is_empty() {
            return bad("no targets".into());
        }
        if !(self.window_s > 0.0) || !(self.margin_s >= 0.0) {
            return bad(format!("window {} s with margin {} s", self.window_s, self.margin_s));
        }
        if self.cv.outer_folds < 2 || self.cv.inner_folds < 2 {
            return bad("cross-validation needs at least 2 folds".into());
        }
        if self.cv.search_budget == 0 {
            return bad("search_budget is 0".into());
        }
        if self.scsa.steps == 0 {
            return bad("scsa.steps is 0".into());
        }
        self.noise
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            filter: self.filter,
            scsa: self.scsa,
            categories: self.categories,
        }
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            seed: self.seed,
            ..self.cv.clone()
        }
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            seed: self.seed,
            ..self.noise.clone()
        }
    }

    /// Requested stages in execution order, without repeats.
    pub fn ordered_stages(&self) -> Vec<Stage> {
        Stage::ALL
            .into_iter()
            .filter(|s| self.stages.contains(s))
            .collect()
    }
}
