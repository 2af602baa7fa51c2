//! Pipeline configuration: defaults, JSON config files with flat dotted
//! keys, and `key=value` overrides. Precedence is flags over file over
//! defaults; the CLI applies them in that order. Validation happens once,
//! after everything is merged.

use std::path::{Path, PathBuf};

use varband_core::detect::DetectorConfig;
use varband_core::ga::{FitnessMode, GaConfig};
use varband_core::nn::TrainConfig;
use varband_core::preprocess::SmoothConfig;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PipelineConfig {
    pub dataset_root: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Channel ids to process; empty means every channel in the dataset.
    pub channels: Vec<String>,
    pub synthetic: bool,
    /// Required before running; there is no wall-clock fallback.
    pub seed: Option<u64>,
    pub window_len: usize,
    pub horizon: usize,
    /// Tail share of the train windows held out for fitness scoring.
    pub validation_fraction: f64,
    pub smooth: SmoothConfig,
    pub train: TrainConfig,
    pub ga: GaConfig,
    pub fitness_mode: FitnessMode,
    pub mc_samples: usize,
    pub detector: DetectorConfig,
    /// Inclusive `tau_max` sweep bounds; None fixes `detector.tau_max`.
    pub tau_grid: Option<(usize, usize)>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset_root: None,
            out_dir: PathBuf::from("out"),
            channels: Vec::new(),
            synthetic: false,
            seed: None,
            window_len: 100,
            horizon: 1,
            validation_fraction: 0.2,
            smooth: SmoothConfig::default(),
            train: TrainConfig::default(),
            ga: GaConfig::full_scale(),
            fitness_mode: FitnessMode::NegMse,
            mc_samples: 1000,
            detector: DetectorConfig::default(),
            tau_grid: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config file {}: {reason}", path.display())]
    File { path: PathBuf, reason: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("config key {key:?}: {reason}")]
    BadValue { key: String, reason: String },
    #[error("seed is required; pass --seed or set the `seed` key")]
    MissingSeed,
    #[error("missing dataset root: pass `dataset.root` or use --synthetic")]
    MissingDatasetRoot,
    #[error("missing file or directory: {}", .0.display())]
    DatasetRootNotFound(PathBuf),
    #[error("bad --set override {0:?}, expected KEY=VALUE")]
    BadOverride(String),
}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn as_usize(key: &str, v: &serde_json::Value) -> Result<usize, ConfigError> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| bad(key, "expected a non-negative integer"))
}

fn as_u64(key: &str, v: &serde_json::Value) -> Result<u64, ConfigError> {
    v.as_u64()
        .ok_or_else(|| bad(key, "expected a non-negative integer"))
}

fn as_f64(key: &str, v: &serde_json::Value) -> Result<f64, ConfigError> {
    v.as_f64().ok_or_else(|| bad(key, "expected a number"))
}

fn as_bool(key: &str, v: &serde_json::Value) -> Result<bool, ConfigError> {
    v.as_bool()
        .ok_or_else(|| bad(key, "expected true or false"))
}

fn as_str<'v>(key: &str, v: &'v serde_json::Value) -> Result<&'v str, ConfigError> {
    v.as_str().ok_or_else(|| bad(key, "expected a string"))
}

/// Parses an inclusive sweep range like `2..9`.
pub fn parse_tau_grid(text: &str) -> Option<(usize, usize)> {
    let (lo, hi) = text.split_once("..")?;
    let lo: usize = lo.trim().parse().ok()?;
    let hi: usize = hi.trim().parse().ok()?;
    Some((lo, hi))
}

impl PipelineConfig {
    /// Bounds small enough to finish on a laptop in minutes: two slots
    /// searched over single 16-unit recurrent layers, 20 epochs, 100 MC
    /// passes, short windows, tau swept over 1..15.
    pub fn desk_scale(&mut self) {
        self.ga = GaConfig {
            l_min: 1,
            l_max: 1,
            n_min: 16,
            n_max: 16,
            min_dropout: 0.08,
            max_dropout: 0.15,
            ni_min: 2,
            ni_max: 3,
            np_min: 3,
            np_max: 4,
            k: 2,
            ..GaConfig::desk()
        };
        self.train.epochs = 20;
        self.train.batch_size = 64;
        self.mc_samples = 100;
        self.window_len = 30;
        self.tau_grid = Some((1, 15));
    }

    /// Applies one dotted key. Unknown keys are errors so typos never
    /// pass silently.
    pub fn apply_kv(&mut self, key: &str, value: &serde_json::Value) -> Result<(), ConfigError> {
        match key {
            "seed" => self.seed = Some(as_u64(key, value)?),
            "out" => self.out_dir = PathBuf::from(as_str(key, value)?),
            "dataset.root" => self.dataset_root = Some(PathBuf::from(as_str(key, value)?)),
            "synthetic" => self.synthetic = as_bool(key, value)?,
            "channels" => {
                self.channels = match value {
                    serde_json::Value::String(s) => s
                        .split(',')
                        .map(|c| c.trim().to_string())
                        .filter(|c| !c.is_empty())
                        .collect(),
                    serde_json::Value::Array(items) => items
                        .iter()
                        .map(|v| as_str(key, v).map(str::to_string))
                        .collect::<Result<_, _>>()?,
                    _ => return Err(bad(key, "expected a list or comma-separated string")),
                }
            }
            "window.len" => self.window_len = as_usize(key, value)?,
            "window.horizon" => self.horizon = as_usize(key, value)?,
            "validation.fraction" => self.validation_fraction = as_f64(key, value)?,
            "smooth.max_window" => self.smooth.max_window = as_usize(key, value)?,
            "smooth.min_window" => self.smooth.min_window = as_usize(key, value)?,
            "smooth.sigma_mult" => self.smooth.sigma_mult = as_f64(key, value)?,
            "train.epochs" => self.train.epochs = as_usize(key, value)?,
            "train.batch_size" => self.train.batch_size = as_usize(key, value)?,
            "train.lr" => self.train.lr = as_f64(key, value)?,
            "train.weight_decay" => self.train.weight_decay = as_f64(key, value)?,
            "train.clip_norm" => self.train.clip_norm = as_f64(key, value)?,
            "ga.l_min" => self.ga.l_min = as_usize(key, value)?,
            "ga.l_max" => self.ga.l_max = as_usize(key, value)?,
            "ga.n_min" => self.ga.n_min = as_usize(key, value)?,
            "ga.n_max" => self.ga.n_max = as_usize(key, value)?,
            "ga.min_dropout" => self.ga.min_dropout = as_f64(key, value)?,
            "ga.max_dropout" => self.ga.max_dropout = as_f64(key, value)?,
            "ga.ni_min" => self.ga.ni_min = as_usize(key, value)?,
            "ga.ni_max" => self.ga.ni_max = as_usize(key, value)?,
            "ga.np_min" => self.ga.np_min = as_usize(key, value)?,
            "ga.np_max" => self.ga.np_max = as_usize(key, value)?,
            "ga.mutation_rate" => self.ga.mutation_rate = as_f64(key, value)?,
            "ga.min_mutation" => self.ga.min_mutation = as_f64(key, value)?,
            "ga.momentum" => self.ga.momentum = as_f64(key, value)?,
            "ga.max_momentum" => self.ga.max_momentum = as_f64(key, value)?,
            "ga.k" => self.ga.k = as_usize(key, value)?,
            "ga.shared_pool" => self.ga.shared_pool = as_bool(key, value)?,
            "fitness" => {
                self.fitness_mode = match as_str(key, value)? {
                    "mse" => FitnessMode::NegMse,
                    "f1" => FitnessMode::F1,
                    other => return Err(bad(key, format!("unknown fitness mode {other:?}"))),
                }
            }
            "mc.samples" => self.mc_samples = as_usize(key, value)?,
            "detector.band_k" => self.detector.band_k = as_f64(key, value)?,
            "detector.q" => self.detector.q = as_usize(key, value)?,
            "detector.tau_max" => self.detector.tau_max = as_usize(key, value)?,
            "tau.grid" => {
                self.tau_grid = match value {
                    serde_json::Value::Null => None,
                    _ => {
                        let text = as_str(key, value)?;
                        Some(parse_tau_grid(text).ok_or_else(|| {
                            bad(key, format!("bad range {text:?}, expected A..B"))
                        })?)
                    }
                }
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Loads a JSON object of dotted keys and applies every entry.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let file_error = |reason: String| ConfigError::File {
            path: path.to_path_buf(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| file_error(e.to_string()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| file_error(e.to_string()))?;
        let object = value
            .as_object()
            .ok_or_else(|| file_error("expected a JSON object".into()))?;
        for (key, value) in object {
            self.apply_kv(key, value)?;
        }
        Ok(())
    }

    /// Applies one `KEY=VALUE` override. The value is read as JSON when it
    /// parses, otherwise as a bare string, so `ga.k=3` and `out=run1` both
    /// work without quoting.
    pub fn apply_set(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (key, raw) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
        let value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        self.apply_kv(key.trim(), &value)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seed.is_none() {
            return Err(ConfigError::MissingSeed);
        }
        if !self.synthetic {
            let root = self
                .dataset_root
                .as_ref()
                .ok_or(ConfigError::MissingDatasetRoot)?;
            if !root.is_dir() {
                return Err(ConfigError::DatasetRootNotFound(root.clone()));
            }
        }
        if self.window_len == 0 {
            return Err(bad("window.len", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(bad("window.horizon", "must be at least 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(bad(
                "validation.fraction",
                "must be strictly between 0 and 1",
            ));
        }
        if self.smooth.min_window == 0 || self.smooth.max_window < self.smooth.min_window {
            return Err(bad(
                "smooth.max_window",
                "window bounds must satisfy 1 <= min <= max",
            ));
        }
        if !(self.smooth.sigma_mult >= 0.0) {
            return Err(bad("smooth.sigma_mult", "must be non-negative"));
        }
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return Err(bad(
                "train.epochs",
                "epochs and batch size must be at least 1",
            ));
        }
        if self.mc_samples < 2 {
            return Err(bad("mc.samples", "variance needs at least 2 samples"));
        }
        self.ga.validate().map_err(|e| bad("ga", e.to_string()))?;
        if !(self.detector.band_k > 0.0) || !self.detector.band_k.is_finite() {
            return Err(bad("detector.band_k", "must be a positive number"));
        }
        if self.detector.q == 0 {
            return Err(bad("detector.q", "must be at least 1"));
        }
        if self.detector.tau_max < self.detector.q {
            return Err(bad("detector.tau_max", "must be at least detector.q"));
        }
        if let Some((lo, hi)) = self.tau_grid {
            if lo == 0 || lo > hi {
                return Err(bad("tau.grid", "bounds must satisfy 1 <= lo <= hi"));
            }
        }
        if self.fitness_mode == FitnessMode::F1 {
            return Err(bad(
                "fitness",
                "the f1 mode needs labelled validation data; train splits are unlabelled, use mse",
            ));
        }
        Ok(())
    }

    /// Seed after validation.
    pub fn seed(&self) -> u64 {
        self.seed.expect("validate() checked the seed")
    }
}
