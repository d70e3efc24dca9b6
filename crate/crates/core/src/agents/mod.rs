//! Planner backends, prompt construction and agent memory.
//!
//! The orchestrator talks to every backend through [`Planner::plan`]: a
//! [`PlannerRequest`] goes in, raw text comes out. The scripted backend
//! derives its text from the corpus ground truth and corrupts it with a
//! calibrated [`ErrorModel`]; the HTTP backend asks a chat-completions
//! endpoint.

mod error_model;
mod http;
mod memory;
mod prompt;
mod scripted;
pub mod text;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::ToolSpec;

pub use error_model::{ErrorKind, ErrorMix, ErrorModel};
pub use http::{prompt_key, HttpConfig, HttpPlanner, ReplayEntry, ReplayPlanner, RequestGate};
pub use memory::{
    bag_of_words, cosine, parse_jsonl, ExperienceRecord, LongTermStore, MemoryError, MemoryKind,
    MemoryStore, RecordOutcome, ShortTermMemory,
};
pub use prompt::{build_prompt, Message, Prompt};
pub use scripted::ScriptedPlanner;

/// Upper bound on few-shot exemplars per request.
pub const K_MAX: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Decompose,
    SubtaskPlan,
    ReactStep,
    FlatPlan,
}

/// Bookkeeping the scripted backend keys its draws on. Live backends
/// ignore it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestMeta {
    pub task_id: String,
    pub round: u32,
    pub role: Option<String>,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShot {
    pub record: ExperienceRecord,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerRequest {
    pub kind: RequestKind,
    pub system: String,
    pub instruction: String,
    pub context: String,
    pub few_shots: Vec<FewShot>,
    pub allowed_tools: Vec<ToolSpec>,
    pub meta: RequestMeta,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PlannerError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    AuthFailure(String),
}

pub trait Planner: Send + Sync {
    fn plan(&self, request: &PlannerRequest) -> Result<String, PlannerError>;

    /// Whether planning time is real wall-clock time worth recording.
    fn is_live(&self) -> bool {
        false
    }
}
