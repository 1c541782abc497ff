use std::cell::RefCell;
use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::CtcError;

/// Sends one prompt to a language model and returns its reply text.
pub trait LlmTransport {
    fn send(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String, CtcError>;
}

impl<T: LlmTransport + ?Sized> LlmTransport for Box<T> {
    fn send(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String, CtcError> {
        (**self).send(prompt, temperature, max_tokens)
    }
}

/// Hex SHA-256 of the prompt text; the key of replay files.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub prompt_hash: String,
    pub response: String,
}

/// Minimal chat-completion client. The bearer token is read from the named
/// environment variable on every call.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    endpoint: String,
    model: String,
    api_key_env: String,
    max_retries: u32,
    backoff: Duration,
    agent: ureq::Agent,
}

pub const DEFAULT_API_KEY_ENV: &str = "TOPICMODEL_LLM_API_KEY";

impl HttpTransport {
    pub fn new(endpoint: &str, model: &str, api_key_env: &str) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build();
        HttpTransport {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key_env: api_key_env.to_string(),
            max_retries: 3,
            backoff: Duration::from_millis(500),
            agent: config.into(),
        }
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn attempt(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String, ureq::Error> {
        let body = json!({
            "model": self.model,
            "temperature": temperature,
            "max_tokens": max_tokens,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut request = self.agent.post(&self.endpoint);
        if let Ok(key) = std::env::var(&self.api_key_env) {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let reply: serde_json::Value = request.send_json(&body)?.body_mut().read_json()?;
        Ok(reply["choices"][0]["message"]["content"]
            .as_str()
            .unwrap_or_default()
            .to_string())
    }
}

impl LlmTransport for HttpTransport {
    fn send(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String, CtcError> {
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                tracing::warn!(attempt, error = %last, "retrying LLM request");
                thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(prompt, temperature, max_tokens) {
                Ok(text) => return Ok(text),
                Err(e) => last = e.to_string(),
            }
        }
        Err(CtcError::Transport(format!(
            "{} failed after {} retries: {last}",
            self.endpoint, self.max_retries
        )))
    }
}

/// Answers from a recorded JSONL file keyed by prompt hash.
#[derive(Debug, Clone, Default)]
pub struct ReplayTransport {
    responses: HashMap<String, String>,
}

impl ReplayTransport {
    pub fn from_entries(entries: impl IntoIterator<Item = ReplayEntry>) -> Self {
        ReplayTransport {
            responses: entries
                .into_iter()
                .map(|e| (e.prompt_hash, e.response))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CtcError> {
        let file = fs::File::open(path).map_err(|e| CtcError::Replay(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| CtcError::Replay(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry = serde_json::from_str(&line)
                .map_err(|e| CtcError::Replay(format!("{} line {}: {e}", path.display(), i + 1)))?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }
}

impl LlmTransport for ReplayTransport {
    fn send(&self, prompt: &str, _temperature: f64, _max_tokens: u32) -> Result<String, CtcError> {
        let hash = prompt_hash(prompt);
        self.responses
            .get(&hash)
            .cloned()
            .ok_or_else(|| CtcError::Replay(format!("no recorded response for prompt {hash}")))
    }
}

/// Passes calls through and keeps every exchange for writing a replay file.
pub struct RecordingTransport<T> {
    inner: T,
    log: RefCell<Vec<ReplayEntry>>,
}

impl<T: LlmTransport> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        RecordingTransport {
            inner,
            log: RefCell::new(Vec::new()),
        }
    }

    pub fn entries(&self) -> Vec<ReplayEntry> {
        self.log.borrow().clone()
    }

    pub fn save(&self, path: &Path) -> Result<(), CtcError> {
        let mut out = fs::File::create(path).map_err(|e| CtcError::Replay(format!("{}: {e}", path.display())))?;
        for entry in self.log.borrow().iter() {
            let line = serde_json::to_string(entry).expect("replay entries serialize");
            writeln!(out, "{line}").map_err(|e| CtcError::Replay(e.to_string()))?;
        }
        Ok(())
    }
}

impl<T: LlmTransport> LlmTransport for RecordingTransport<T> {
    fn send(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String, CtcError> {
        let response = self.inner.send(prompt, temperature, max_tokens)?;
        self.log.borrow_mut().push(ReplayEntry {
            prompt_hash: prompt_hash(prompt),
            response: response.clone(),
        });
        Ok(response)
    }
}
