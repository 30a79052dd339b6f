//! Uniform chat-completion interface over a remote OpenAI-compatible
//! backend and a deterministic scripted backend, with retries, strict
//! JSON extraction, and cost accounting.

mod json;
mod remote;
mod scripted;

use std::collections::HashMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use json::extract_json_payload;
pub use remote::{RemoteBackend, RetryPolicy};
pub use scripted::ScriptedBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: MessageRole,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: MessageRole::System,
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: MessageRole::User,
            content: content.into(),
        }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: MessageRole::Assistant,
            content: content.into(),
        }
    }
}

/// One chat-completion request. `tag` is engine-side routing metadata for
/// the scripted backend and the request log; it never goes on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_output: u32,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    /// Present even when empty; empty output is a recorded anomaly.
    pub content: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency: Duration,
}

/// A backend reply plus how many transport attempts it took.
#[derive(Debug, Clone)]
pub struct BackendReply {
    pub response: ChatResponse,
    pub attempts: u32,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("no backend registered for model {0:?}")]
    UnknownModel(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("no scripted transcript for tag {tag:?} (model {model:?})")]
    MissingTranscript { tag: String, model: String },
    #[error("no JSON object found in model output")]
    NoJsonObject { raw: String },
    #[error("trailing content after JSON object")]
    TrailingContent { raw: String },
    #[error("malformed JSON in model output: {message}")]
    MalformedJson { message: String, raw: String },
    #[error("request has no messages")]
    EmptyRequest,
}

/// One backend serving completions for the models registered under it.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<BackendReply, ProviderError>;
}

/// One row of the cost ledger, appended per logical call. Failed calls
/// record zero tokens but keep their attempt count.
#[derive(Debug, Clone, Serialize)]
pub struct LedgerEntry {
    pub model_id: String,
    pub tag: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub attempts: u32,
    pub ok: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct LedgerTotals {
    pub calls: u64,
    pub attempts: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

struct Admission {
    cap: usize,
    state: Mutex<usize>,
    cv: Condvar,
}

impl Admission {
    fn acquire(&self) {
        let mut in_flight = self.state.lock().unwrap();
        while *in_flight >= self.cap {
            in_flight = self.cv.wait(in_flight).unwrap();
        }
        *in_flight += 1;
    }

    fn release(&self) {
        *self.state.lock().unwrap() -= 1;
        self.cv.notify_one();
    }
}

/// Routes requests to the backend owning the model, limits in-flight
/// calls to the configured cap, records every call in the cost ledger,
/// and keeps a request log for hermeticity audits.
pub struct Gateway {
    default_backend: Option<Box<dyn Backend>>,
    per_model: HashMap<String, Box<dyn Backend>>,
    admission: Admission,
    ledger: Mutex<Vec<LedgerEntry>>,
    request_log: Mutex<Vec<ChatRequest>>,
}

impl Gateway {
    pub fn new() -> Self {
        Self::with_parallelism_cap(1)
    }

    pub fn with_parallelism_cap(cap: usize) -> Self {
        Gateway {
            default_backend: None,
            per_model: HashMap::new(),
            admission: Admission {
                cap: cap.max(1),
                state: Mutex::new(0),
                cv: Condvar::new(),
            },
            ledger: Mutex::new(Vec::new()),
            request_log: Mutex::new(Vec::new()),
        }
    }

    /// Backend used for any model without an explicit registration.
    pub fn set_default_backend(&mut self, backend: Box<dyn Backend>) {
        self.default_backend = Some(backend);
    }

    pub fn register_model(&mut self, model_id: impl Into<String>, backend: Box<dyn Backend>) {
        self.per_model.insert(model_id.into(), backend);
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        if request.messages.is_empty() {
            return Err(ProviderError::EmptyRequest);
        }
        let backend = self
            .per_model
            .get(&request.model_id)
            .or(self.default_backend.as_ref())
            .ok_or_else(|| ProviderError::UnknownModel(request.model_id.clone()))?;

        self.request_log.lock().unwrap().push(request.clone());
        self.admission.acquire();
        let result = backend.complete(request);
        self.admission.release();

        let entry = match &result {
            Ok(reply) => LedgerEntry {
                model_id: request.model_id.clone(),
                tag: request.tag.clone(),
                prompt_tokens: reply.response.prompt_tokens,
                completion_tokens: reply.response.completion_tokens,
                attempts: reply.attempts,
                ok: true,
            },
            Err(err) => LedgerEntry {
                model_id: request.model_id.clone(),
                tag: request.tag.clone(),
                prompt_tokens: 0,
                completion_tokens: 0,
                attempts: match err {
                    ProviderError::Transport { attempts, .. } => *attempts,
                    _ => 1,
                },
                ok: false,
            },
        };
        self.ledger.lock().unwrap().push(entry);
        result.map(|reply| reply.response)
    }

    pub fn ledger(&self) -> Vec<LedgerEntry> {
        self.ledger.lock().unwrap().clone()
    }

    pub fn ledger_totals(&self) -> LedgerTotals {
        let ledger = self.ledger.lock().unwrap();
        LedgerTotals {
            calls: ledger.len() as u64,
            attempts: ledger.iter().map(|e| e.attempts as u64).sum(),
            prompt_tokens: ledger.iter().map(|e| e.prompt_tokens).sum(),
            completion_tokens: ledger.iter().map(|e| e.completion_tokens).sum(),
        }
    }

    /// Every request routed through this gateway, in order.
    pub fn request_log(&self) -> Vec<ChatRequest> {
        self.request_log.lock().unwrap().clone()
    }
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new()
    }
}
