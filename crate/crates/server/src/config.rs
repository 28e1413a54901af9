//! Service and per-session configuration: TOML file plus environment
//! overrides.
//!
//! ```toml
//! [server]
//! bind = "127.0.0.1"
//! port = 8080
//! record_dir = "records"   # omit to disable recording
//! time_scale = 1.0         # session clock speed relative to wall time
//! seed = 0
//!
//! [session.window]
//! window_len_ms = 10000
//! stride_ms = 2000
//!
//! [session.clustering]
//! min_samples = 100
//! eps = "dynamic"          # or a number, e.g. 0.05
//!
//! [session.alert]
//! threshold = 0.5
//! consecutive_windows = 3
//! cooloff_windows = 5
//!
//! [session.heatmap]
//! rows = 32
//! cols = 32
//!
//! [session.scoring]
//! strategy = "density"     # or "statistical"
//! ```
//!
//! Environment overrides (applied after the file): `GAZECLASS_BIND`,
//! `GAZECLASS_PORT`, `GAZECLASS_RECORD_DIR`, `GAZECLASS_TIME_SCALE`,
//! `GAZECLASS_SEED`, `GAZECLASS_WINDOW_MS`, `GAZECLASS_STRIDE_MS`,
//! `GAZECLASS_MIN_SAMPLES`, `GAZECLASS_EPS`, `GAZECLASS_ALERT_THRESHOLD`,
//! `GAZECLASS_ALERT_CONSECUTIVE`, `GAZECLASS_ALERT_COOLOFF`.

use std::path::{Path, PathBuf};

use gazeclass_core::clustering::{ClusteringParams, EpsMode};
use gazeclass_core::heatmap::DEFAULT_HEATMAP_SIDE;
use gazeclass_core::scoring::{ScoreStrategy, StatisticalScoring, DEFAULT_Z_REF};
use gazeclass_core::{AlertPolicy, GazeError, RandomizationConfig, WindowConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Name of the offending field, when known.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

impl From<GazeError> for ConfigError {
    fn from(e: GazeError) -> Self {
        match e {
            GazeError::InvalidConfig { field, reason } => ConfigError::invalid(field, reason),
            other => ConfigError::invalid("config", other.to_string()),
        }
    }
}

/// `eps = "dynamic"` or `eps = <number>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsSetting {
    Value(f64),
    Named(EpsName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsName {
    Dynamic,
}

impl Default for EpsSetting {
    fn default() -> Self {
        EpsSetting::Named(EpsName::Dynamic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub min_samples: usize,
    pub eps: EpsSetting,
    pub auto_scale: bool,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        let p = ClusteringParams::<f64>::default();
        Self {
            min_samples: p.min_samples,
            eps: EpsSetting::default(),
            auto_scale: p.auto_scale,
        }
    }
}

impl ClusteringConfig {
    pub fn params(&self) -> ClusteringParams<f64> {
        ClusteringParams {
            min_samples: self.min_samples,
            eps: match self.eps {
                EpsSetting::Value(v) => EpsMode::Fixed(v),
                EpsSetting::Named(EpsName::Dynamic) => EpsMode::Dynamic,
            },
            auto_scale: self.auto_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapConfig {
    pub rows: usize,
    pub cols: usize,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            rows: DEFAULT_HEATMAP_SIDE,
            cols: DEFAULT_HEATMAP_SIDE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub strategy: ScoreStrategy,
    /// Statistical strategy: z at which the score saturates.
    pub z_ref: f64,
    pub trials: usize,
    pub sample_size: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        let r = RandomizationConfig::default();
        Self {
            strategy: ScoreStrategy::Density,
            z_ref: DEFAULT_Z_REF,
            trials: r.trials,
            sample_size: r.sample_size,
        }
    }
}

impl ScoringConfig {
    pub fn statistical(&self, seed: u64) -> StatisticalScoring {
        StatisticalScoring {
            randomization: RandomizationConfig {
                trials: self.trials,
                sample_size: self.sample_size,
                seed,
                alpha: RandomizationConfig::default().alpha,
            },
            z_ref: self.z_ref,
        }
    }
}

/// Everything that shapes one session's analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub window: WindowConfig,
    pub clustering: ClusteringConfig,
    pub alert: AlertPolicy,
    pub heatmap: HeatmapConfig,
    pub scoring: ScoringConfig,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            window: WindowConfig::default(),
            clustering: ClusteringConfig::default(),
            alert: AlertPolicy::default(),
            heatmap: HeatmapConfig::default(),
            scoring: ScoringConfig::default(),
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let prefixed = |section: &str, e: GazeError| match e {
            GazeError::InvalidConfig { field, reason } => {
                ConfigError::invalid(format!("{section}.{field}"), reason)
            }
            other => ConfigError::invalid(section, other.to_string()),
        };
        self.window.validate().map_err(|e| prefixed("window", e))?;
        self.clustering
            .params()
            .validate()
            .map_err(|e| prefixed("clustering", e))?;
        self.alert.validate().map_err(|e| prefixed("alert", e))?;
        if self.heatmap.rows == 0 || self.heatmap.cols == 0 || self.heatmap.rows * self.heatmap.cols > 1 << 16 {
            return Err(ConfigError::invalid("heatmap.rows", "grid must have between 1 and 65536 cells"));
        }
        if self.scoring.strategy == ScoreStrategy::Statistical {
            if !(self.scoring.z_ref > 0.0) {
                return Err(ConfigError::invalid("scoring.z_ref", "must be positive"));
            }
            self.scoring
                .statistical(self.seed)
                .randomization
                .validate()
                .map_err(|e| prefixed("scoring", e))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub bind: String,
    pub port: u16,
    pub record_dir: Option<PathBuf>,
    pub time_scale: f64,
}

impl Default for ServerSection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            record_dir: None,
            time_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub server: ServerSection,
    pub session: SessionConfig,
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Applies `GAZECLASS_*` overrides from `vars`.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
            v.trim()
                .parse()
                .map_err(|_| ConfigError::invalid(key, format!("cannot parse {v:?}")))
        }
        for (k, v) in vars {
            let (k, v) = (k.as_ref(), v.as_ref());
            match k {
                "GAZECLASS_BIND" => self.server.bind = v.to_owned(),
                "GAZECLASS_PORT" => self.server.port = num(k, v)?,
                "GAZECLASS_RECORD_DIR" => self.server.record_dir = Some(PathBuf::from(v)),
                "GAZECLASS_TIME_SCALE" => self.server.time_scale = num(k, v)?,
                "GAZECLASS_SEED" => self.session.seed = num(k, v)?,
                "GAZECLASS_WINDOW_MS" => self.session.window.window_len_ms = num(k, v)?,
                "GAZECLASS_STRIDE_MS" => self.session.window.stride_ms = num(k, v)?,
                "GAZECLASS_MIN_SAMPLES" => self.session.clustering.min_samples = num(k, v)?,
                "GAZECLASS_EPS" => {
                    self.session.clustering.eps = if v.eq_ignore_ascii_case("dynamic") {
                        EpsSetting::Named(EpsName::Dynamic)
                    } else {
                        EpsSetting::Value(num(k, v)?)
                    }
                }
                "GAZECLASS_ALERT_THRESHOLD" => self.session.alert.threshold = num(k, v)?,
                "GAZECLASS_ALERT_CONSECUTIVE" => self.session.alert.consecutive_windows = num(k, v)?,
                "GAZECLASS_ALERT_COOLOFF" => self.session.alert.cooloff_windows = num(k, v)?,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.server.time_scale > 0.0 && self.server.time_scale.is_finite()) {
            return Err(ConfigError::invalid("server.time_scale", "must be a positive number"));
        }
        self.session.validate()
    }
}
