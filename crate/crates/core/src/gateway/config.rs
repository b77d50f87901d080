use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Gateway, GatewayError, HttpChatProvider, RetryPolicy, ScriptedProvider};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    HttpChat,
    Scripted,
}

fn default_model() -> String {
    "llama-3.1-8b-instruct".to_string()
}

fn default_timeout_secs() -> f64 {
    20.0
}

fn default_max_retries() -> u32 {
    2
}

fn default_backoff_ms() -> u64 {
    250
}

/// Where completions come from and how hard to try.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_model")]
    pub model_name: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_path: Option<PathBuf>,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

impl ProviderConfig {
    pub fn http(endpoint: impl Into<String>) -> Self {
        ProviderConfig {
            kind: ProviderKind::HttpChat,
            endpoint: Some(endpoint.into()),
            model_name: default_model(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            script_path: None,
            api_key: None,
            backoff_ms: default_backoff_ms(),
        }
    }

    pub fn scripted(path: impl Into<PathBuf>) -> Self {
        ProviderConfig {
            kind: ProviderKind::Scripted,
            endpoint: None,
            script_path: Some(path.into()),
            ..ProviderConfig::http("")
        }
    }

    /// Parses `scripted:FILE` or `http:URL`. A bare `http://…`/`https://…`
    /// URL is accepted as well.
    pub fn parse_spec(spec: &str) -> Result<Self, GatewayError> {
        if let Some(path) = spec.strip_prefix("scripted:") {
            if path.is_empty() {
                return Err(GatewayError::InvalidConfig("scripted provider needs a file".into()));
            }
            return Ok(ProviderConfig::scripted(path));
        }
        if spec.starts_with("http://") || spec.starts_with("https://") {
            return Ok(ProviderConfig::http(spec));
        }
        if let Some(url) = spec.strip_prefix("http:") {
            return Ok(ProviderConfig::http(url));
        }
        Err(GatewayError::InvalidConfig(format!(
            "unrecognized provider {spec:?} (expected scripted:FILE or http:URL)"
        )))
    }

    pub fn from_toml(document: &str) -> Result<Self, GatewayError> {
        toml::from_str(document).map_err(|e| GatewayError::InvalidConfig(e.message().to_string()))
    }

    /// Applies `ROLESWITCH_*` overrides through `lookup` (normally `std::env::var`).
    pub fn apply_env<F>(&mut self, lookup: F) -> Result<(), GatewayError>
    where
        F: Fn(&str) -> Option<String>,
    {
        if let Some(spec) = lookup("ROLESWITCH_PROVIDER") {
            let parsed = ProviderConfig::parse_spec(&spec)?;
            self.kind = parsed.kind;
            self.endpoint = parsed.endpoint;
            self.script_path = parsed.script_path;
        }
        if let Some(model) = lookup("ROLESWITCH_MODEL") {
            self.model_name = model;
        }
        if let Some(key) = lookup("ROLESWITCH_API_KEY") {
            self.api_key = Some(key);
        }
        if let Some(t) = lookup("ROLESWITCH_TIMEOUT_SECS") {
            self.timeout_secs = t
                .parse()
                .map_err(|_| GatewayError::InvalidConfig(format!("bad ROLESWITCH_TIMEOUT_SECS {t:?}")))?;
        }
        if let Some(r) = lookup("ROLESWITCH_MAX_RETRIES") {
            self.max_retries = r
                .parse()
                .map_err(|_| GatewayError::InvalidConfig(format!("bad ROLESWITCH_MAX_RETRIES {r:?}")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.timeout_secs > 0.0) || !self.timeout_secs.is_finite() {
            return Err(GatewayError::InvalidConfig("timeout must be > 0".into()));
        }
        match self.kind {
            ProviderKind::HttpChat if self.endpoint.as_deref().unwrap_or("").is_empty() => {
                Err(GatewayError::InvalidConfig("http_chat provider needs an endpoint".into()))
            }
            ProviderKind::Scripted if self.script_path.is_none() => {
                Err(GatewayError::InvalidConfig("scripted provider needs script_path".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_backoff: Duration::from_millis(self.backoff_ms),
            max_backoff: Duration::from_millis(self.backoff_ms.saturating_mul(16)),
        }
    }

    /// Builds the provider this configuration describes.
    pub fn connect(&self) -> Result<Gateway, GatewayError> {
        self.validate()?;
        match self.kind {
            ProviderKind::HttpChat => {
                let provider = HttpChatProvider::new(
                    self.endpoint.clone().unwrap_or_default(),
                    self.model_name.clone(),
                    self.api_key.clone(),
                    self.timeout(),
                )?;
                Ok(Gateway::new(Arc::new(provider), self.retry_policy()))
            }
            ProviderKind::Scripted => {
                let path = self.script_path.as_ref().expect("validated");
                let provider = ScriptedProvider::from_file(path)?;
                Ok(Gateway::new(Arc::new(provider), RetryPolicy::no_delay(self.max_retries)))
            }
        }
    }
}
