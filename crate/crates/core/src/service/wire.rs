use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::audit::RejectReason;
use crate::domain::{StepDefinition, StepPluginDescriptor, TaskId};

/// Assignment id the marketplace sends while a worker only previews a HIT.
pub const PREVIEW_ASSIGNMENT_ID: &str = "ASSIGNMENT_ID_NOT_AVAILABLE";

/// Prefix of the assignment id given to sessions opened without one.
pub const STANDALONE_PREFIX: &str = "STANDALONE-";

/// Query parameters of the external-HIT handshake.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    #[serde(rename = "assignmentId", default)]
    pub assignment_id: Option<String>,
    #[serde(rename = "hitId", default)]
    pub hit_id: Option<String>,
    #[serde(rename = "workerId", default)]
    pub worker_id: Option<String>,
    #[serde(rename = "turkSubmitTo", default)]
    pub turk_submit_to: Option<String>,
}

impl Handshake {
    pub fn live(assignment_id: &str, hit_id: &str, worker_id: &str, turk_submit_to: &str) -> Self {
        Self {
            assignment_id: Some(assignment_id.into()),
            hit_id: Some(hit_id.into()),
            worker_id: Some(worker_id.into()),
            turk_submit_to: Some(turk_submit_to.into()),
        }
    }

    pub fn preview() -> Self {
        Self {
            assignment_id: Some(PREVIEW_ASSIGNMENT_ID.into()),
            ..Self::default()
        }
    }

    pub fn is_preview(&self) -> bool {
        self.assignment_id.as_deref() == Some(PREVIEW_ASSIGNMENT_ID)
    }
}

/// Everything the runner needs to render a task for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskBundle {
    pub task_id: TaskId,
    pub name: String,
    pub description: String,
    /// In the order this session presents them.
    pub steps: Vec<StepDefinition>,
    /// Enabled auditor kinds, ascending.
    pub auditors: Vec<String>,
    /// Client scripts of the enabled auditors, in `auditors` order.
    pub auditor_scripts: Vec<String>,
    /// Descriptors of custom step kinds used by the task.
    pub step_plugins: Vec<StepPluginDescriptor>,
    /// Empty in preview.
    pub session_token: String,
    pub preview: bool,
    /// The handshake carried no assignment id.
    pub standalone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestRequest {
    pub batch_seq: u64,
    pub events: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestAck {
    pub accepted: usize,
    /// `(index in batch, reason)` pairs.
    pub rejected: Vec<(usize, RejectReason)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerInput {
    pub step_id: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub answers: Vec<AnswerInput>,
    #[serde(default)]
    pub events: Vec<Value>,
    pub end_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Redirect {
    pub url: String,
    /// Form fields to post to `url`.
    pub fields: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResult {
    pub response_pk: i64,
    /// Events in the finalized log, batches and trailing events together.
    pub event_count: usize,
    pub redirect: Redirect,
}
