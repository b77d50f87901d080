//! Text-generation providers behind a common retrying gateway.
//!
//! Two providers ship: [`HttpChatProvider`] for any chat-completion endpoint
//! and [`ScriptedProvider`], a deterministic replay double used throughout
//! the tests and for offline runs.

mod config;
mod http;
mod scripted;

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{ProviderConfig, ProviderKind};
pub use http::HttpChatProvider;
pub use scripted::{ScriptEntry, ScriptedProvider};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("generation unavailable: {cause}")]
    Unavailable { cause: String, attempts: u32 },
    #[error("provider protocol error: {0}")]
    Protocol(String),
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
}

/// Outcome of one provider attempt that did not yield text.
#[derive(Debug, Clone, PartialEq)]
pub enum ProviderFailure {
    /// Worth retrying: timeouts, refused connections, 5xx, 429.
    Transient(String),
    /// Retrying cannot help (exhausted script, 4xx).
    Fatal(String),
    /// The provider answered with something that is not a completion.
    Protocol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

impl fmt::Display for ChatRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChatRole::System => "system",
            ChatRole::User => "user",
            ChatRole::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Sampling {
    /// Live role-play sessions.
    pub const SESSION: Sampling = Sampling {
        temperature: 0.7,
        max_tokens: 400,
        seed: None,
    };

    /// Questionnaire self-assessment; trials must vary, so sampling stays stochastic.
    pub const SELF_ASSESSMENT: Sampling = Sampling {
        temperature: 1.0,
        max_tokens: 32,
        seed: None,
    };
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::SESSION
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub system_prompt: String,
    pub messages: Vec<ChatMessage>,
    pub sampling: Sampling,
}

impl GenerationRequest {
    pub fn new(
        system_prompt: impl Into<String>,
        messages: Vec<ChatMessage>,
        sampling: Sampling,
    ) -> Result<Self, GatewayError> {
        let req = GenerationRequest {
            system_prompt: system_prompt.into(),
            messages,
            sampling,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() && self.system_prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest(
                "request needs a system prompt or at least one message".into(),
            ));
        }
        if !(self.sampling.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.sampling.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be > 0".into()));
        }
        Ok(())
    }
}

/// A source of completions. Implementations make a single attempt; retries
/// live in [`Gateway`].
pub trait Provider: Send + Sync {
    fn complete(&self, request: &GenerationRequest) -> Result<String, ProviderFailure>;

    fn describe(&self) -> String;
}

/// Exponential backoff: `base · 2^attempt`, capped at `max_backoff`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 2,
            base_backoff: Duration::from_millis(250),
            max_backoff: Duration::from_secs(4),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_retries: u32) -> Self {
        RetryPolicy {
            max_retries,
            base_backoff: Duration::ZERO,
            max_backoff: Duration::ZERO,
        }
    }

    /// Pause before retry number `retry` (0-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.min(31)).unwrap_or(u32::MAX);
        self.base_backoff
            .checked_mul(factor)
            .unwrap_or(self.max_backoff)
            .min(self.max_backoff)
    }

    pub fn schedule(&self) -> Vec<Duration> {
        (0..self.max_retries).map(|r| self.backoff(r)).collect()
    }
}

/// Shareable handle pairing a provider with its retry policy.
#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn Provider>,
    policy: RetryPolicy,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("provider", &self.provider.describe())
            .field("policy", &self.policy)
            .finish()
    }
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>, policy: RetryPolicy) -> Self {
        Gateway { provider, policy }
    }

    pub fn scripted(provider: Arc<ScriptedProvider>) -> Self {
        Gateway::new(provider, RetryPolicy::no_delay(0))
    }

    pub fn policy(&self) -> &RetryPolicy {
        &self.policy
    }

    pub fn provider(&self) -> &Arc<dyn Provider> {
        &self.provider
    }

    /// Returns the completion text, retrying transient failures with backoff.
    pub fn generate(&self, request: &GenerationRequest) -> Result<String, GatewayError> {
        request.validate()?;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.provider.complete(request) {
                Ok(text) => return Ok(text),
                Err(ProviderFailure::Protocol(msg)) => return Err(GatewayError::Protocol(msg)),
                Err(ProviderFailure::Fatal(cause)) => {
                    return Err(GatewayError::Unavailable { cause, attempts })
                }
                Err(ProviderFailure::Transient(cause)) => {
                    if attempts > self.policy.max_retries {
                        return Err(GatewayError::Unavailable { cause, attempts });
                    }
                    let pause = self.policy.backoff(attempts - 1);
                    if !pause.is_zero() {
                        std::thread::sleep(pause);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        calls: AtomicU32,
        succeed_on: u32,
    }

    impl Provider for Flaky {
        fn complete(&self, _: &GenerationRequest) -> Result<String, ProviderFailure> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
            if n >= self.succeed_on {
                Ok(format!("ok after {n}"))
            } else {
                Err(ProviderFailure::Transient(format!("attempt {n} timed out")))
            }
        }

        fn describe(&self) -> String {
            "flaky".into()
        }
    }

    fn request() -> GenerationRequest {
        GenerationRequest::new("sys", vec![ChatMessage::user("hi")], Sampling::SESSION).unwrap()
    }

    #[test]
    fn retries_transient_failures() {
        let p = Arc::new(Flaky {
            calls: AtomicU32::new(0),
            succeed_on: 3,
        });
        let gw = Gateway::new(p.clone(), RetryPolicy::no_delay(2));
        assert_eq!(gw.generate(&request()).unwrap(), "ok after 3");
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gives_up_after_max_retries() {
        let p = Arc::new(Flaky {
            calls: AtomicU32::new(0),
            succeed_on: 10,
        });
        let gw = Gateway::new(p.clone(), RetryPolicy::no_delay(2));
        let err = gw.generate(&request()).unwrap_err();
        assert_eq!(
            err,
            GatewayError::Unavailable {
                cause: "attempt 3 timed out".into(),
                attempts: 3
            }
        );
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn backoff_is_monotone_and_capped() {
        let policy = RetryPolicy {
            max_retries: 40,
            base_backoff: Duration::from_millis(100),
            max_backoff: Duration::from_secs(3),
        };
        let s = policy.schedule();
        assert_eq!(s[0], Duration::from_millis(100));
        assert_eq!(s[1], Duration::from_millis(200));
        assert!(s.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*s.last().unwrap(), Duration::from_secs(3));
    }

    #[test]
    fn request_invariants() {
        assert!(GenerationRequest::new("", vec![], Sampling::SESSION).is_err());
        assert!(GenerationRequest::new("sys", vec![], Sampling::SESSION).is_ok());
        let bad = Sampling {
            temperature: -0.1,
            ..Sampling::SESSION
        };
        assert!(GenerationRequest::new("sys", vec![], bad).is_err());
        let bad = Sampling {
            max_tokens: 0,
            ..Sampling::SESSION
        };
        assert!(GenerationRequest::new("sys", vec![], bad).is_err());
    }
}
