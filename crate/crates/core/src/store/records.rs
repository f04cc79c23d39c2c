use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::{
    AuditorDescriptor, PluginRegistry, StepKind, StepPluginDescriptor, TaskDefinition, TaskId, TaskStatus,
};

/// A task together with the plugin descriptors it was created against.
///
/// Descriptors are captured at creation so that exports stay readable after
/// a plugin is removed from the registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub definition: TaskDefinition,
    /// One per configured auditor, ascending by kind.
    pub auditors: Vec<AuditorDescriptor>,
    /// One per custom step kind used by the task.
    pub step_plugins: Vec<StepPluginDescriptor>,
}

impl TaskRecord {
    /// Captures the descriptors `definition` refers to. Kinds missing from
    /// the registry are skipped; [`crate::domain::create_task`] rejects them earlier.
    pub fn snapshot(definition: TaskDefinition, registry: &PluginRegistry) -> Self {
        let auditors = definition
            .auditors
            .iter()
            .filter_map(|k| registry.auditor(k).cloned())
            .collect();
        let mut step_plugins: Vec<StepPluginDescriptor> = Vec::new();
        for step in &definition.steps {
            if let StepKind::Custom(kind) = &step.kind {
                if !step_plugins.iter().any(|p| &p.kind == kind) {
                    step_plugins.extend(registry.step_plugin(kind).cloned());
                }
            }
        }
        Self {
            definition,
            auditors,
            step_plugins,
        }
    }

    pub fn auditor(&self, kind: &str) -> Option<&AuditorDescriptor> {
        self.auditors.iter().find(|a| a.kind == kind)
    }

    pub fn step_plugin(&self, kind: &str) -> Option<&StepPluginDescriptor> {
        self.step_plugins.iter().find(|p| p.kind == kind)
    }
}

/// Row of the admin task listing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_id: TaskId,
    pub name: String,
    pub status: TaskStatus,
    pub response_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Open,
    Submitted,
    Abandoned,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionState::Open => "open",
            SessionState::Submitted => "submitted",
            SessionState::Abandoned => "abandoned",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "open" => Some(SessionState::Open),
            "submitted" => Some(SessionState::Submitted),
            "abandoned" => Some(SessionState::Abandoned),
            _ => None,
        }
    }
}

/// One worker's pass through a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub task_id: TaskId,
    pub worker_id: String,
    pub assignment_id: String,
    pub hit_id: String,
    pub turk_submit_to: String,
    pub step_order_seed: u64,
    pub started_at: DateTime<Utc>,
    pub state: SessionState,
}
