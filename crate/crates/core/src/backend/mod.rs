//! Completion backends: a live OpenAI-compatible chat client and a
//! deterministic mock.

mod live;
mod mock;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agentization::AgentKind;

pub use live::LiveBackend;
pub use mock::MockBackend;

pub const ARTIFACT_OPEN: &str = "<ARTIFACT>";
pub const ARTIFACT_CLOSE: &str = "</ARTIFACT>";
/// Critic reply marker that ends a leg early.
pub const APPROVE_TOKEN: &str = "<APPROVE>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// One chat completion on behalf of an agent.
///
/// `agent`, `template_id`, `kind` and `scope` never go over the wire; they
/// identify the requesting agent for the mock and for tracing.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub agent: String,
    pub template_id: String,
    pub kind: AgentKind,
    /// The interaction unit (or other job) this call belongs to.
    pub scope: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CompletionRequest {
    pub fn check(&self) -> Result<(), BackendError> {
        match self.messages.first() {
            None => return Err(BackendError::InvalidRequest("no messages".into())),
            Some(m) if m.role != Role::System => {
                return Err(BackendError::InvalidRequest("first message must be a system message".into()))
            }
            _ => {}
        }
        if let Some(m) = self.messages.iter().find(|m| m.role != Role::System && m.content.trim().is_empty()) {
            return Err(BackendError::InvalidRequest(format!("empty {:?} message", m.role)));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("protocol error: {message}")]
    Protocol { message: String, raw: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, BackendError> {
        (**self).complete(request)
    }
}

pub type BackendHandle = Arc<dyn Backend>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    Live,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub mode: BackendMode,
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    pub api_key_env_var: String,
    pub request_timeout_secs: f64,
    pub max_retries: u32,
    /// First retry delay; doubles on every further attempt.
    pub retry_base_delay_ms: u64,
    /// Client-side token-bucket limit; `None` disables it.
    pub requests_per_minute: Option<u32>,
    pub max_in_flight: usize,
    pub mock_seed: u64,
    pub mock_reply_tokens: u32,
    /// Probability that a mock critic reply is an approval.
    pub mock_approval_rate: f64,
}

pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            mode: BackendMode::Mock,
            endpoint_url: None,
            model_name: None,
            api_key_env_var: DEFAULT_API_KEY_ENV.into(),
            request_timeout_secs: 60.0,
            max_retries: 3,
            retry_base_delay_ms: 500,
            requests_per_minute: None,
            max_in_flight: 8,
            mock_seed: 0,
            mock_reply_tokens: 10,
            mock_approval_rate: 0.125,
        }
    }
}

impl BackendConfig {
    pub fn mock(seed: u64) -> Self {
        Self { mock_seed: seed, ..Self::default() }
    }

    pub fn check(&self) -> Result<(), BackendError> {
        match self.mode {
            BackendMode::Live => {
                if self.endpoint_url.as_deref().is_none_or(|u| u.trim().is_empty()) {
                    return Err(BackendError::Config("live mode requires endpoint_url".into()));
                }
                if self.model_name.as_deref().is_none_or(|m| m.trim().is_empty()) {
                    return Err(BackendError::Config("live mode requires model_name".into()));
                }
                if self.max_in_flight == 0 {
                    return Err(BackendError::Config("max_in_flight must be positive".into()));
                }
            }
            BackendMode::Mock => {
                if self.mock_reply_tokens == 0 {
                    return Err(BackendError::Config("mock_reply_tokens must be positive".into()));
                }
                if !(0.0..=1.0).contains(&self.mock_approval_rate) {
                    return Err(BackendError::Config("mock_approval_rate must lie in [0, 1]".into()));
                }
            }
        }
        Ok(())
    }
}

pub fn build_backend(cfg: &BackendConfig) -> Result<BackendHandle, BackendError> {
    cfg.check()?;
    Ok(match cfg.mode {
        BackendMode::Mock => Arc::new(MockBackend::from_config(cfg)),
        BackendMode::Live => Arc::new(LiveBackend::new(cfg)?),
    })
}

/// One-shot completion through a freshly built backend.
pub fn complete(
    cfg: &BackendConfig,
    request: &CompletionRequest,
) -> Result<ChatMessage, BackendError> {
    request.check()?;
    build_backend(cfg)?.complete(request)
}

/// Text between the first opening and the last closing artifact marker.
pub fn extract_artifact(reply: &str) -> Option<String> {
    let open = reply.find(ARTIFACT_OPEN)?;
    let close = reply.rfind(ARTIFACT_CLOSE)?;
    let start = open + ARTIFACT_OPEN.len();
    if close < start {
        return None;
    }
    Some(reply[start..close].trim().to_string())
}

pub fn is_approval(reply: &str) -> bool {
    reply.contains(APPROVE_TOKEN)
}

/// Free-form `[aspect:...]` tags a critic attached to its reply.
pub fn aspect_tags(reply: &str) -> Vec<String> {
    let mut tags = Vec::new();
    let mut rest = reply;
    while let Some(start) = rest.find("[aspect:") {
        let after = &rest[start + "[aspect:".len()..];
        match after.find(']') {
            Some(end) => {
                let tag = after[..end].trim();
                if !tag.is_empty() {
                    tags.push(tag.to_string());
                }
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    tags
}
