use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatMessage, ChatRole, GatewayError, GenerationRequest, Provider, ProviderFailure};

#[derive(Serialize)]
struct WireMessage<'a> {
    role: ChatRole,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    stream: bool,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireResponseMessage,
}

#[derive(Deserialize)]
struct WireResponseMessage {
    content: Option<String>,
}

/// Client for the common chat-completion wire shape: a system message plus
/// the role-attributed history in, `choices[0].message.content` out.
pub struct HttpChatProvider {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpChatProvider {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, GatewayError> {
        let endpoint = endpoint.into();
        if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
            return Err(GatewayError::InvalidConfig(format!(
                "endpoint must be an http(s) URL, got {endpoint:?}"
            )));
        }
        if timeout.is_zero() {
            return Err(GatewayError::InvalidConfig("timeout must be > 0".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpChatProvider {
            endpoint,
            model: model.into(),
            api_key,
            agent,
        })
    }

    fn wire_request<'a>(&'a self, request: &'a GenerationRequest) -> WireRequest<'a> {
        let mut messages = Vec::with_capacity(request.messages.len() + 1);
        if !request.system_prompt.is_empty() {
            messages.push(WireMessage {
                role: ChatRole::System,
                content: &request.system_prompt,
            });
        }
        messages.extend(request.messages.iter().map(|m: &ChatMessage| WireMessage {
            role: m.role,
            content: &m.content,
        }));
        WireRequest {
            model: &self.model,
            messages,
            temperature: request.sampling.temperature,
            max_tokens: request.sampling.max_tokens,
            seed: request.sampling.seed,
            stream: false,
        }
    }
}

/// Extracts `choices[0].message.content` from a response body.
pub(crate) fn parse_completion(body: &str) -> Result<String, ProviderFailure> {
    let parsed: WireResponse = serde_json::from_str(body)
        .map_err(|e| ProviderFailure::Protocol(format!("unexpected response body: {e}")))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| ProviderFailure::Protocol("response has no choices[0].message.content".into()))
}

impl Provider for HttpChatProvider {
    fn complete(&self, request: &GenerationRequest) -> Result<String, ProviderFailure> {
        let mut call = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = match call.send_json(self.wire_request(request)) {
            Ok(r) => r,
            Err(ureq::Error::BadUri(e)) => return Err(ProviderFailure::Fatal(format!("bad endpoint: {e}"))),
            Err(e) => return Err(ProviderFailure::Transient(e.to_string())),
        };
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderFailure::Transient(format!("reading response: {e}")))?;
        match status {
            200..=299 => parse_completion(&body),
            408 | 429 | 500..=599 => Err(ProviderFailure::Transient(format!("http status {status}"))),
            _ => {
                let snippet: String = body.chars().take(200).collect();
                Err(ProviderFailure::Fatal(format!("http status {status}: {snippet}")))
            }
        }
    }

    fn describe(&self) -> String {
        format!("http_chat {} ({})", self.endpoint, self.model)
    }
}
