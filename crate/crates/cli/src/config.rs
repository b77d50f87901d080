use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

use roleswitch::gateway::ProviderConfig;

/// Optional `--config` file. Flags override it; environment variables
/// override both.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scenario: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub provider: Option<ProviderConfig>,
    #[serde(default)]
    pub validation: ValidationSection,
    #[serde(default)]
    pub serve: ServeSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    pub trials: Option<usize>,
    pub threshold: Option<f64>,
    pub parallel: Option<usize>,
    pub instrument: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeSection {
    pub bind: Option<String>,
    pub port: Option<u16>,
    pub token: Option<String>,
    #[serde(default)]
    pub cors_origins: Vec<String>,
    pub reports: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Provider from the file, then the `--provider` flag, then `ROLESWITCH_*`.
    pub fn provider(&self, flag: Option<&str>) -> anyhow::Result<ProviderConfig> {
        let mut config = match (&self.provider, flag) {
            (_, Some(spec)) => {
                let parsed = ProviderConfig::parse_spec(spec)?;
                match &self.provider {
                    Some(base) => ProviderConfig {
                        kind: parsed.kind,
                        endpoint: parsed.endpoint,
                        script_path: parsed.script_path,
                        ..base.clone()
                    },
                    None => parsed,
                }
            }
            (Some(base), None) => base.clone(),
            (None, None) => ProviderConfig::parse_spec(
                &std::env::var("ROLESWITCH_PROVIDER")
                    .map_err(|_| anyhow::anyhow!("no provider: pass --provider scripted:FILE|http:URL"))?,
            )?,
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        config.validate()?;
        Ok(config)
    }
}

pub fn env_or<T: std::str::FromStr>(key: &str, fallback: Option<T>) -> anyhow::Result<Option<T>> {
    match std::env::var(key) {
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|_| anyhow::anyhow!("bad value for {key}: {v:?}")),
        Err(_) => Ok(fallback),
    }
}
