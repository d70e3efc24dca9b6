//! Chat-completions backend and its offline replay.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{build_prompt, Message, Planner, PlannerError, PlannerRequest};

pub const ENV_BASE_URL: &str = "PLANNER_BASE_URL";
pub const ENV_API_KEY: &str = "PLANNER_API_KEY";
pub const ENV_MODEL: &str = "PLANNER_MODEL";

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    /// Endpoint root; `/chat/completions` is appended.
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub retries: u32,
    pub backoff: Duration,
    pub timeout: Duration,
    pub max_tokens: u32,
    pub replay_log: Option<PathBuf>,
}

impl HttpConfig {
    pub fn new(base_url: &str, model: &str) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: None,
            model: model.to_string(),
            retries: 2,
            backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
            max_tokens: 4095,
            replay_log: None,
        }
    }

    pub fn from_env() -> Result<Self, PlannerError> {
        let base = std::env::var(ENV_BASE_URL)
            .map_err(|_| PlannerError::InvalidRequest(format!("{ENV_BASE_URL} is not set")))?;
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "glm-4".to_string());
        let mut cfg = Self::new(&base, &model);
        cfg.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Ok(cfg)
    }
}

/// Counting semaphore bounding concurrent outbound requests.
#[derive(Debug)]
pub struct RequestGate {
    cap: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub struct GatePermit<'a> {
    gate: &'a RequestGate,
}

impl RequestGate {
    pub const DEFAULT_CAP: usize = 4;

    pub fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> GatePermit<'_> {
        let mut n = self.in_flight.lock().expect("gate poisoned");
        while *n >= self.cap {
            n = self.freed.wait(n).expect("gate poisoned");
        }
        *n += 1;
        GatePermit { gate: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.in_flight.lock().expect("gate poisoned")
    }
}

impl Default for RequestGate {
    fn default() -> Self {
        Self::new(Self::DEFAULT_CAP)
    }
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        let mut n = self.gate.in_flight.lock().expect("gate poisoned");
        *n -= 1;
        self.gate.freed.notify_one();
    }
}

/// One line of the replay log: every attempt is recorded, failed ones with
/// `content: null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub key: String,
    pub attempt: u32,
    pub status: Option<u16>,
    pub content: Option<String>,
    pub error: Option<String>,
}

/// Stable identity of a prompt: SHA-256 over its JSON message array.
pub fn prompt_key(messages: &[Message]) -> String {
    let body = serde_json::to_vec(messages).expect("serializable");
    hex::encode(Sha256::digest(body))
}

pub struct HttpPlanner {
    config: HttpConfig,
    agent: ureq::Agent,
    gate: Arc<RequestGate>,
    log: Mutex<Option<File>>,
}

enum Attempt {
    Done(String),
    Retry(Option<u16>, String),
    Fatal(PlannerError),
}

impl HttpPlanner {
    pub fn new(config: HttpConfig, gate: Arc<RequestGate>) -> Result<Self, PlannerError> {
        let log = match &config.replay_log {
            Some(path) => Some(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| PlannerError::InvalidRequest(format!("{}: {e}", path.display())))?,
            ),
            None => None,
        };
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Ok(Self {
            config,
            agent,
            gate,
            log: Mutex::new(log),
        })
    }

    fn record(&self, entry: &ReplayEntry) {
        let mut guard = self.log.lock().expect("log poisoned");
        if let Some(file) = guard.as_mut() {
            let mut line = serde_json::to_string(entry).expect("serializable");
            line.push('\n');
            // A lost log line only costs offline reproducibility.
            let _ = file.write_all(line.as_bytes()).and_then(|_| file.flush());
        }
    }

    fn attempt(&self, body: &serde_json::Value) -> Attempt {
        let url = format!("{}/chat/completions", self.config.base_url);
        let mut req = self.agent.post(&url).set("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let _permit = self.gate.acquire();
        match req.send_json(body.clone()) {
            Ok(resp) => {
                let value: serde_json::Value = match resp.into_json() {
                    Ok(v) => v,
                    Err(e) => return Attempt::Retry(Some(200), format!("unreadable body: {e}")),
                };
                match value["choices"][0]["message"]["content"].as_str() {
                    Some(text) => Attempt::Done(text.to_string()),
                    None => Attempt::Fatal(PlannerError::Transport(
                        "response has no choices[0].message.content".into(),
                    )),
                }
            }
            Err(ureq::Error::Status(code @ (401 | 403), _)) => {
                Attempt::Fatal(PlannerError::AuthFailure(format!("HTTP {code}")))
            }
            Err(ureq::Error::Status(code, _)) if code >= 500 => {
                Attempt::Retry(Some(code), format!("HTTP {code}"))
            }
            Err(ureq::Error::Status(code, _)) => {
                Attempt::Fatal(PlannerError::Transport(format!("HTTP {code}")))
            }
            Err(ureq::Error::Transport(t)) => Attempt::Retry(None, t.to_string()),
        }
    }
}

impl Planner for HttpPlanner {
    fn plan(&self, request: &PlannerRequest) -> Result<String, PlannerError> {
        let prompt = build_prompt(request);
        let key = prompt_key(&prompt.messages);
        let body = json!({
            "model": self.config.model,
            "messages": prompt.messages,
            "temperature": 0,
            "max_tokens": self.config.max_tokens,
        });
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(self.config.backoff * 2u32.pow(attempt - 1));
            }
            match self.attempt(&body) {
                Attempt::Done(text) => {
                    self.record(&ReplayEntry {
                        key,
                        attempt,
                        status: Some(200),
                        content: Some(text.clone()),
                        error: None,
                    });
                    return Ok(text);
                }
                Attempt::Retry(status, err) => {
                    self.record(&ReplayEntry {
                        key: key.clone(),
                        attempt,
                        status,
                        content: None,
                        error: Some(err.clone()),
                    });
                    last = err;
                }
                Attempt::Fatal(e) => {
                    self.record(&ReplayEntry {
                        key,
                        attempt,
                        status: None,
                        content: None,
                        error: Some(e.to_string()),
                    });
                    return Err(e);
                }
            }
        }
        Err(PlannerError::Transport(format!(
            "{last} after {} retries",
            self.config.retries
        )))
    }

    fn is_live(&self) -> bool {
        true
    }
}

/// Serves recorded responses by prompt key, offline.
#[derive(Debug, Clone, Default)]
pub struct ReplayPlanner {
    responses: HashMap<String, String>,
}

impl ReplayPlanner {
    pub fn load(path: &Path) -> Result<Self, PlannerError> {
        let file = File::open(path)
            .map_err(|e| PlannerError::InvalidRequest(format!("{}: {e}", path.display())))?;
        let mut responses = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| PlannerError::InvalidRequest(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry = serde_json::from_str(&line).map_err(|e| {
                PlannerError::InvalidRequest(format!("{} line {}: {e}", path.display(), i + 1))
            })?;
            if let Some(content) = entry.content {
                responses.insert(entry.key, content);
            }
        }
        Ok(Self { responses })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Planner for ReplayPlanner {
    fn plan(&self, request: &PlannerRequest) -> Result<String, PlannerError> {
        let key = prompt_key(&build_prompt(request).messages);
        self.responses
            .get(&key)
            .cloned()
            .ok_or_else(|| PlannerError::Transport(format!("no recorded response for prompt {key}")))
    }
}
