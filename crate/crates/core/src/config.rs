//! Tool configuration: model roster, transport policy, scourer defaults and
//! data paths. Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};
use std::time::Duration;

use rust_decimal::Decimal;
use serde::Deserialize;
use thiserror::Error;

use crate::gateway::{LiveConfig, ModelSpec, RetryPolicy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config: {0}")]
    Invalid(String),
    #[error("config: {key} path {path} does not exist")]
    MissingPath { key: &'static str, path: PathBuf },
    #[error("environment variable {0} is not set")]
    MissingCredential(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "default_credential_env")]
    credential_env: String,
    #[serde(default = "default_base_url")]
    base_url: String,
    #[serde(default = "default_timeout")]
    timeout_secs: u64,
    #[serde(default = "default_retries")]
    max_retries: u32,
    #[serde(default)]
    backoff_ms: u64,
    #[serde(default = "default_in_flight")]
    max_in_flight: usize,
    #[serde(default = "default_judge")]
    judge_model: String,
    rules: Option<String>,
    lexicon: Option<PathBuf>,
    replay: Option<PathBuf>,
    #[serde(default)]
    scour: ScourDefaults,
    #[serde(default)]
    models: Vec<ModelSpec>,
}

fn default_credential_env() -> String {
    "OPENROUTER_API_KEY".into()
}
fn default_base_url() -> String {
    "https://openrouter.ai/api/v1".into()
}
/// Model used for rule prompts and block decomposition when none is named.
pub const DEFAULT_JUDGE_MODEL: &str = "Claude Opus 4.6";

fn default_judge() -> String {
    DEFAULT_JUDGE_MODEL.into()
}
fn default_timeout() -> u64 {
    120
}
fn default_retries() -> u32 {
    2
}
fn default_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScourDefaults {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_max_passes")]
    pub max_passes: usize,
    pub max_output_tokens: Option<u32>,
}

fn default_k() -> usize {
    3
}
fn default_max_passes() -> usize {
    10
}

impl Default for ScourDefaults {
    fn default() -> Self {
        Self { k: default_k(), max_passes: default_max_passes(), max_output_tokens: None }
    }
}

/// Where the rule set comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleSource {
    Builtin,
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct Config {
    pub models: Vec<ModelSpec>,
    /// Name of the variable holding the API key; the key itself never lives
    /// in config.
    pub credential_env: String,
    pub base_url: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    pub scour: ScourDefaults,
    pub judge_model: String,
    pub rules: RuleSource,
    pub lexicon: Option<PathBuf>,
    pub replay: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            models: Vec::new(),
            credential_env: default_credential_env(),
            base_url: default_base_url(),
            timeout: Duration::from_secs(default_timeout()),
            retry: RetryPolicy::default(),
            max_in_flight: default_in_flight(),
            scour: ScourDefaults::default(),
            judge_model: default_judge(),
            rules: RuleSource::Builtin,
            lexicon: None,
            replay: None,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse { path: path.to_path_buf(), message },
            other => other,
        })
    }

    /// Parses and validates; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)
            .map_err(|e| ConfigError::Parse { path: PathBuf::new(), message: e.to_string() })?;
        if raw.scour.k == 0 {
            return Err(ConfigError::Invalid("scour.k must be at least 1".into()));
        }
        if raw.scour.max_passes == 0 {
            return Err(ConfigError::Invalid("scour.max_passes must be at least 1".into()));
        }
        for (i, m) in raw.models.iter().enumerate() {
            if m.price_in < Decimal::ZERO || m.price_out < Decimal::ZERO {
                return Err(ConfigError::Invalid(format!("model {:?} has a negative price", m.model_id)));
            }
            if raw.models[..i].iter().any(|o| o.model_id == m.model_id) {
                return Err(ConfigError::Invalid(format!("model {:?} is listed twice", m.model_id)));
            }
        }
        let existing = |key: &'static str, p: PathBuf| {
            let p = base.join(p);
            if p.exists() {
                Ok(p)
            } else {
                Err(ConfigError::MissingPath { key, path: p })
            }
        };
        let rules = match raw.rules.as_deref() {
            None | Some("builtin") => RuleSource::Builtin,
            Some(p) => RuleSource::File(existing("rules", PathBuf::from(p))?),
        };
        Ok(Config {
            models: raw.models,
            credential_env: raw.credential_env,
            base_url: raw.base_url,
            timeout: Duration::from_secs(raw.timeout_secs),
            retry: RetryPolicy { max_retries: raw.max_retries, backoff: Duration::from_millis(raw.backoff_ms) },
            max_in_flight: raw.max_in_flight,
            scour: raw.scour,
            judge_model: raw.judge_model,
            rules,
            lexicon: raw.lexicon.map(|p| existing("lexicon", p)).transpose()?,
            replay: raw.replay.map(|p| existing("replay", p)).transpose()?,
        })
    }

    /// Live transport settings; reads the credential through `env`.
    pub fn live(&self, env: &dyn Fn(&str) -> Option<String>) -> Result<LiveConfig, ConfigError> {
        let api_key = env(&self.credential_env).ok_or_else(|| ConfigError::MissingCredential(self.credential_env.clone()))?;
        Ok(LiveConfig {
            base_url: self.base_url.clone(),
            api_key,
            timeout: self.timeout,
            max_in_flight: self.max_in_flight,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
credential_env = "MY_KEY"
max_retries = 1

[scour]
k = 1
max_passes = 4

[[models]]
model_id = "Kimi K2.5"
provider_route = "moonshotai/kimi-k2.5"
price_in = "0.6"
price_out = "2.5"
"#;

    #[test]
    fn parses_roster_and_defaults() {
        let c = Config::from_toml(SAMPLE, Path::new(".")).unwrap();
        assert_eq!(c.models.len(), 1);
        assert_eq!(c.models[0].cost(1_000_000, 0), Decimal::new(6, 1));
        assert_eq!(c.scour.k, 1);
        assert_eq!(c.retry.max_retries, 1);
        assert_eq!(c.rules, RuleSource::Builtin);
        assert_eq!(c.timeout, Duration::from_secs(120));
    }

    #[test]
    fn credential_comes_from_env() {
        let c = Config::from_toml(SAMPLE, Path::new(".")).unwrap();
        assert!(matches!(c.live(&|_| None), Err(ConfigError::MissingCredential(v)) if v == "MY_KEY"));
        let live = c.live(&|k| (k == "MY_KEY").then(|| "secret".to_string())).unwrap();
        assert_eq!(live.api_key, "secret");
    }

    #[test]
    fn rejects_bad_values() {
        let zero_k = SAMPLE.replace("k = 1", "k = 0");
        assert!(matches!(Config::from_toml(&zero_k, Path::new(".")), Err(ConfigError::Invalid(_))));
        let negative = SAMPLE.replace("\"0.6\"", "\"-1\"");
        assert!(matches!(Config::from_toml(&negative, Path::new(".")), Err(ConfigError::Invalid(_))));
        let missing = format!("lexicon = \"nope.toml\"\n{SAMPLE}");
        assert!(matches!(Config::from_toml(&missing, Path::new(".")), Err(ConfigError::MissingPath { .. })));
        assert!(matches!(Config::from_toml("bogus = 1", Path::new(".")), Err(ConfigError::Parse { .. })));
    }
}
