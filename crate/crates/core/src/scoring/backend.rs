//! Chat-model backends.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::scoring::parse::{format_response, Choice};

pub const DEFAULT_API_KEY_ENV: &str = "CALLSIGNAL_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Body of a chat-completion POST.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn user(model: &str, prompt: String, temperature: f64, seed: Option<u64>) -> Self {
        Self {
            model: model.to_string(),
            messages: vec![ChatMessage { role: "user".into(), content: prompt }],
            temperature,
            seed,
        }
    }

    pub fn prompt(&self) -> &str {
        self.messages.last().map(|m| m.content.as_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendError {
    pub message: String,
    /// Rate limits, timeouts and 5xx responses are worth another attempt.
    pub retryable: bool,
}

impl BackendError {
    pub fn fatal(message: impl Into<String>) -> Self {
        Self { message: message.into(), retryable: false }
    }

    pub fn transient(message: impl Into<String>) -> Self {
        Self { message: message.into(), retryable: true }
    }
}

pub trait ModelBackend: Send + Sync {
    fn id(&self) -> &str;
    fn model(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

/// Deterministic offline backend: the answer is a seeded hash of
/// (model, prompt), so identical chunks and questions always agree.
#[derive(Debug, Clone)]
pub struct MockBackend {
    model: String,
    seed: u64,
}

const HIGH_EXPLANATIONS: &[&str] = &[
    "management expects strong demand to continue into the next quarter",
    "the company raised its outlook on improving market conditions",
    "executives cited solid order growth and a healthy backlog",
    "management is confident that the positive momentum will continue",
    "customers are increasing spending as business conditions improve",
];

const LOW_EXPLANATIONS: &[&str] = &[
    "management cited macroeconomic uncertainty and softening customer demand",
    "the company expects continued pressure from higher interest rates",
    "executives noted a challenging environment and weaker order activity",
    "management lowered its outlook due to persistent inflation and slowing sales",
    "customers are reducing spending amid economic uncertainty",
];

const NEUTRAL_EXPLANATIONS: &[&str] =
    &["management expects conditions to remain broadly stable", "the company did not signal any change in its outlook"];

impl MockBackend {
    pub fn new(model: impl Into<String>, seed: u64) -> Self {
        Self { model: model.into(), seed }
    }

    fn draw(&self, prompt: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(self.model.as_bytes());
        h.update([0u8]);
        h.update(prompt.as_bytes());
        h.finalize().into()
    }
}

impl ModelBackend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let bytes = self.draw(request.prompt());
        let roll = u16::from_le_bytes([bytes[0], bytes[1]]) % 100;
        let pick = bytes[2] as usize;
        // positive skew, a little no-information and a few off-format replies
        let choice = match roll {
            0..=3 => return Ok("It is difficult to say based on this excerpt.".into()),
            4..=15 => return Ok("no information is provided.".into()),
            16..=20 => Choice::DecSubst,
            21..=34 => Choice::Dec,
            35..=54 => Choice::NoChange,
            55..=87 => Choice::Inc,
            _ => Choice::IncSubst,
        };
        let bank = match choice {
            Choice::Inc | Choice::IncSubst => HIGH_EXPLANATIONS,
            Choice::Dec | Choice::DecSubst => LOW_EXPLANATIONS,
            _ => NEUTRAL_EXPLANATIONS,
        };
        Ok(format_response(choice, &format!("{}.", bank[pick % bank.len()])))
    }
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Debug, Deserialize)]
struct CompletionChoice {
    message: ChatMessage,
}

/// Extracts the first choice's message content from a chat-completion response body.
pub fn parse_completion_body(body: &str) -> Result<String, BackendError> {
    let parsed: CompletionResponse =
        serde_json::from_str(body).map_err(|e| BackendError::fatal(format!("bad response body: {e}")))?;
    parsed
        .choices
        .into_iter()
        .next()
        .map(|c| c.message.content)
        .ok_or_else(|| BackendError::fatal("response has no choices"))
}

/// Any server speaking the OpenAI chat-completions protocol.
pub struct OpenAiCompatBackend {
    base_url: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl OpenAiCompatBackend {
    /// `api_key_env` names the environment variable holding the bearer token.
    pub fn new(base_url: &str, model: &str, api_key_env: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key: std::env::var(api_key_env).ok().filter(|k| !k.is_empty()),
            agent,
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }
}

impl ModelBackend for OpenAiCompatBackend {
    fn id(&self) -> &str {
        "openai-compat"
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let mut call = self.agent.post(&self.endpoint()).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call.send_json(request).map_err(|e| BackendError::transient(format!("transport: {e}")))?;
        let status = response.status().as_u16();
        let body =
            response.body_mut().read_to_string().map_err(|e| BackendError::transient(format!("reading body: {e}")))?;
        match status {
            200..=299 => parse_completion_body(&body),
            408 | 429 | 500..=599 => Err(BackendError::transient(format!("HTTP {status}: {body}"))),
            _ => Err(BackendError::fatal(format!("HTTP {status}: {body}"))),
        }
    }
}
