//! Deterministic scripted backend replaying pre-registered transcripts.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;

use super::{Backend, BackendReply, ChatRequest, ChatResponse, ProviderError};

/// Replays canned completions keyed by request tag. Each tag may carry a
/// sequence of responses consumed in order; the last one repeats, so a
/// re-prompt after a malformed reply sees the same (or a scripted
/// follow-up) transcript deterministically.
pub struct ScriptedBackend {
    transcripts: Mutex<HashMap<String, VecDeque<String>>>,
}

#[derive(Deserialize)]
struct TranscriptFile {
    entries: Vec<TranscriptEntry>,
}

#[derive(Deserialize)]
struct TranscriptEntry {
    key: String,
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    sequence: Vec<String>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        ScriptedBackend {
            transcripts: Mutex::new(HashMap::new()),
        }
    }

    pub fn register(&self, tag: impl Into<String>, content: impl Into<String>) {
        self.transcripts
            .lock()
            .unwrap()
            .entry(tag.into())
            .or_default()
            .push_back(content.into());
    }

    /// Registers a sequence of responses for one tag, consumed in order.
    pub fn register_sequence<I, S>(&self, tag: impl Into<String>, contents: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut map = self.transcripts.lock().unwrap();
        let queue = map.entry(tag.into()).or_default();
        for c in contents {
            queue.push_back(c.into());
        }
    }

    /// Loads a transcript table from a JSON file:
    /// `{"entries":[{"key":"...","content":"..."}, {"key":"...","sequence":["a","b"]}]}`.
    pub fn from_file(path: &Path) -> Result<Self, anyhow::Error> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading transcript {}: {e}", path.display()))?;
        let file: TranscriptFile = serde_json::from_str(&raw)
            .map_err(|e| anyhow::anyhow!("parsing transcript {}: {e}", path.display()))?;
        let backend = ScriptedBackend::new();
        for entry in file.entries {
            if let Some(content) = entry.content {
                backend.register(&entry.key, content);
            }
            backend.register_sequence(&entry.key, entry.sequence);
        }
        Ok(backend)
    }
}

impl Default for ScriptedBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<BackendReply, ProviderError> {
        let mut map = self.transcripts.lock().unwrap();
        let queue = map
            .get_mut(&request.tag)
            .filter(|q| !q.is_empty())
            .ok_or_else(|| ProviderError::MissingTranscript {
                tag: request.tag.clone(),
                model: request.model_id.clone(),
            })?;
        let content = if queue.len() == 1 {
            queue.front().unwrap().clone()
        } else {
            queue.pop_front().unwrap()
        };
        // Deterministic token accounting: whitespace-word counts.
        let prompt_tokens: u64 = request
            .messages
            .iter()
            .map(|m| m.content.split_whitespace().count() as u64)
            .sum();
        let completion_tokens = content.split_whitespace().count() as u64;
        Ok(BackendReply {
            response: ChatResponse {
                content,
                prompt_tokens,
                completion_tokens,
                latency: Duration::ZERO,
            },
            attempts: 1,
        })
    }
}
