//! TOML configuration shared by the CLI and the service.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! k = 10
//! seed = 0
//! token_env = "KAPG_TOKEN"
//!
//! [paths]
//! model = "m.kapg"
//! kb = "kb.kapg"
//! rank = "rank.kapg"
//!
//! [fusion]
//! lambda_mode = "sum_raw_clipped"
//! lambda_max = 0.95
//!
//! [update]
//! alpha = 1.0
//! beta = 0.8
//!
//! [suggestions]
//! enabled = true
//! timeout_ms = 50
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dpg::UpdatePolicy;
use crate::error::{Error, Result};
use crate::fusion::FusionPolicy;
use crate::knowledge::DEFAULT_K;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub model: Option<PathBuf>,
    pub kb: Option<PathBuf>,
    pub rank: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Suggestions {
    pub enabled: bool,
    pub timeout_ms: u64,
}

impl Default for Suggestions {
    fn default() -> Self {
        Self {
            enabled: true,
            timeout_ms: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    pub fusion: FusionPolicy,
    pub update: UpdatePolicy,
    pub k: usize,
    pub seed: u64,
    pub listen: String,
    /// Shared secret for knowledge updates. Prefer `token_env`.
    pub token: Option<String>,
    /// Environment variable holding the shared secret.
    pub token_env: Option<String>,
    pub suggestions: Suggestions,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            fusion: FusionPolicy::default(),
            update: UpdatePolicy::default(),
            k: DEFAULT_K,
            seed: 0,
            listen: "127.0.0.1:8080".into(),
            token: None,
            token_env: None,
            suggestions: Suggestions::default(),
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative artifact paths resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.paths.model, &mut cfg.paths.kb, &mut cfg.paths.rank].into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        self.fusion.validate()?;
        self.update.validate()
    }

    /// The update token, from `token_env` if set, else `token`.
    pub fn resolve_token(&self) -> Option<String> {
        match &self.token_env {
            Some(var) => std::env::var(var).ok().filter(|t| !t.is_empty()),
            None => self.token.clone().filter(|t| !t.is_empty()),
        }
    }

    pub fn require(path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        path.clone().ok_or_else(|| Error::Config(format!("paths.{what} is not set")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::LambdaMode;

    #[test]
    fn parses_full_example() {
        let text = r#"
listen = "0.0.0.0:9000"
k = 5
token = "s3cret"
[paths]
model = "m.kapg"
[fusion]
lambda_mode = "fixed"
fixed_lambda = 0.0
[update]
beta = 0.5
"#;
        let c = Config::parse(text).unwrap();
        assert_eq!(c.k, 5);
        assert_eq!(c.fusion.lambda_mode, LambdaMode::Fixed);
        assert_eq!(c.update.alpha, 1.0);
        assert_eq!(c.update.beta, 0.5);
        assert_eq!(c.resolve_token().as_deref(), Some("s3cret"));
        assert!(c.suggestions.enabled);
    }

    #[test]
    fn defaults_and_errors() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
        assert!(Config::parse("k = 0").is_err());
        assert!(Config::parse("bogus = 1").is_err());
        assert!(Config::parse("[fusion]\nlambda_mode = \"fixed\"").is_err());
    }
}
