//! OpenAI-compatible remote backend with exponential-backoff retries.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendReply, ChatRequest, ChatResponse, ProviderError};

pub const API_KEY_ENV: &str = "CTX2SKILL_API_KEY";
pub const API_BASE_ENV: &str = "CTX2SKILL_API_BASE";

/// Exponential backoff: base delay doubled per attempt, jittered, capped.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub retry_limit: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retry_limit: 3,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let exp = self.base_delay.as_millis().saturating_mul(1u128 << attempt.min(16));
        let capped = exp.min(self.max_delay.as_millis()) as u64;
        let jittered = rand::thread_rng().gen_range(capped / 2..=capped);
        Duration::from_millis(jittered)
    }
}

pub struct RemoteBackend {
    base_url: String,
    api_key: String,
    policy: RetryPolicy,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl RemoteBackend {
    /// Reads credentials from `CTX2SKILL_API_KEY` / `CTX2SKILL_API_BASE`.
    pub fn from_env(policy: RetryPolicy) -> Result<Self, anyhow::Error> {
        let base_url = std::env::var(API_BASE_ENV)
            .map_err(|_| anyhow::anyhow!("{API_BASE_ENV} is not set"))?;
        let api_key = std::env::var(API_KEY_ENV)
            .map_err(|_| anyhow::anyhow!("{API_KEY_ENV} is not set"))?;
        Ok(Self::new(base_url, api_key, policy))
    }

    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, policy: RetryPolicy) -> Self {
        RemoteBackend {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            policy,
            client: reqwest::blocking::Client::new(),
        }
    }

    fn attempt(&self, request: &ChatRequest) -> Result<ChatResponse, String> {
        let wire = WireRequest {
            model: &request.model_id,
            messages: request
                .messages
                .iter()
                .map(|m| WireMessage {
                    role: match m.role {
                        super::MessageRole::System => "system",
                        super::MessageRole::User => "user",
                        super::MessageRole::Assistant => "assistant",
                    },
                    content: &m.content,
                })
                .collect(),
            temperature: request.temperature,
            max_tokens: request.max_output,
        };
        let started = Instant::now();
        let resp = self
            .client
            .post(format!("{}/v1/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&wire)
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("http {status}"));
        }
        let body: WireResponse = resp.json().map_err(|e| e.to_string())?;
        let content = body
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .unwrap_or_default();
        let usage = body.usage.unwrap_or_default();
        Ok(ChatResponse {
            content,
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
            latency: started.elapsed(),
        })
    }
}

impl Backend for RemoteBackend {
    fn complete(&self, request: &ChatRequest) -> Result<BackendReply, ProviderError> {
        let mut last_err = String::new();
        for attempt in 0..=self.policy.retry_limit {
            match self.attempt(request) {
                Ok(response) => {
                    return Ok(BackendReply {
                        response,
                        attempts: attempt + 1,
                    })
                }
                Err(message) => {
                    log::warn!(
                        "remote call {} attempt {} failed: {message}",
                        request.tag,
                        attempt + 1
                    );
                    last_err = message;
                    if attempt < self.policy.retry_limit {
                        std::thread::sleep(self.policy.delay(attempt));
                    }
                }
            }
        }
        Err(ProviderError::Transport {
            attempts: self.policy.retry_limit + 1,
            message: last_err,
        })
    }
}
