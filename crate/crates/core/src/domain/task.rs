use std::collections::{BTreeSet, HashSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use super::registry::PluginRegistry;
use crate::text::is_xml_safe;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(String);

impl TaskId {
    pub fn generate() -> Self {
        Self(Uuid::new_v4().simple().to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<String> for TaskId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl From<&str> for TaskId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StepId(String);

impl StepId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<String> for StepId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl From<&str> for StepId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl fmt::Display for StepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The kind of a step. Anything that is not one of the three built-in names is
/// a custom step backed by a registered [`StepPluginDescriptor`](super::StepPluginDescriptor).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum StepKind {
    MultipleChoice,
    MultipleAnswer,
    TextResponse,
    Custom(String),
}

impl StepKind {
    pub fn name(&self) -> &str {
        match self {
            StepKind::MultipleChoice => "multiple_choice",
            StepKind::MultipleAnswer => "multiple_answer",
            StepKind::TextResponse => "text_response",
            StepKind::Custom(kind) => kind,
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self, StepKind::Custom(_))
    }

    fn takes_options(&self) -> bool {
        matches!(self, StepKind::MultipleChoice | StepKind::MultipleAnswer)
    }
}

impl From<String> for StepKind {
    fn from(s: String) -> Self {
        match s.as_str() {
            "multiple_choice" => StepKind::MultipleChoice,
            "multiple_answer" => StepKind::MultipleAnswer,
            "text_response" => StepKind::TextResponse,
            _ => StepKind::Custom(s),
        }
    }
}

impl From<&str> for StepKind {
    fn from(s: &str) -> Self {
        StepKind::from(s.to_owned())
    }
}

impl From<StepKind> for String {
    fn from(k: StepKind) -> Self {
        k.name().to_owned()
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepDefinition {
    pub step_id: StepId,
    pub kind: StepKind,
    pub prompt: String,
    #[serde(default)]
    pub options: Vec<String>,
    pub required: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingMode {
    #[default]
    Fixed,
    Randomized,
}

impl OrderingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OrderingMode::Fixed => "fixed",
            OrderingMode::Randomized => "randomized",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fixed" => Some(OrderingMode::Fixed),
            "randomized" => Some(OrderingMode::Randomized),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Draft,
    Published,
    Closed,
}

impl TaskStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Draft => "draft",
            TaskStatus::Published => "published",
            TaskStatus::Closed => "closed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "draft" => Some(TaskStatus::Draft),
            "published" => Some(TaskStatus::Published),
            "closed" => Some(TaskStatus::Closed),
            _ => None,
        }
    }

    /// The lifecycle only moves forward: draft → published → closed.
    pub fn can_transition_to(self, next: TaskStatus) -> bool {
        matches!(
            (self, next),
            (TaskStatus::Draft, TaskStatus::Published) | (TaskStatus::Published, TaskStatus::Closed)
        )
    }
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A deployable HIT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDefinition {
    pub task_id: TaskId,
    pub name: String,
    pub description: String,
    pub steps: Vec<StepDefinition>,
    pub ordering_mode: OrderingMode,
    pub auditors: BTreeSet<String>,
    pub status: TaskStatus,
    pub created_at: DateTime<Utc>,
}

impl TaskDefinition {
    pub fn step(&self, id: &StepId) -> Option<&StepDefinition> {
        self.steps.iter().find(|s| &s.step_id == id)
    }
}

/// Authoring input for [`create_task`]; the JSON body of the task creation endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub steps: Vec<StepSpec>,
    #[serde(default)]
    pub ordering_mode: OrderingMode,
    #[serde(default)]
    pub auditors: Vec<String>,
}

/// A step as authored. A missing `step_id` becomes `s{n}` for the n-th step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSpec {
    #[serde(default)]
    pub step_id: Option<String>,
    pub kind: StepKind,
    pub prompt: String,
    #[serde(default)]
    pub options: Vec<String>,
    #[serde(default = "default_required")]
    pub required: bool,
}

fn default_required() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum StepViolation {
    #[error("step id must be nonempty")]
    EmptyStepId,
    #[error("prompt must be nonempty")]
    EmptyPrompt,
    #[error("{kind} needs at least 2 options, found {found}")]
    TooFewOptions { kind: String, found: usize },
    #[error("{kind} takes no options, found {found}")]
    UnexpectedOptions { kind: String, found: usize },
    #[error("option {option:?} appears more than once")]
    DuplicateOption { option: String },
    #[error("text contains characters that cannot be exported")]
    IllegalCharacter,
}

/// Checks the per-step invariants and reports every violation found.
pub fn validate_step(def: &StepDefinition) -> Result<(), Vec<StepViolation>> {
    let mut violations = Vec::new();
    if def.step_id.as_str().is_empty() {
        violations.push(StepViolation::EmptyStepId);
    }
    if def.prompt.is_empty() {
        violations.push(StepViolation::EmptyPrompt);
    }
    if def.kind.takes_options() {
        if def.options.len() < 2 {
            violations.push(StepViolation::TooFewOptions {
                kind: def.kind.name().to_owned(),
                found: def.options.len(),
            });
        }
    } else if !def.options.is_empty() {
        violations.push(StepViolation::UnexpectedOptions {
            kind: def.kind.name().to_owned(),
            found: def.options.len(),
        });
    }
    let mut seen = HashSet::new();
    let mut reported = HashSet::new();
    for option in &def.options {
        if !seen.insert(option.as_str()) && reported.insert(option.as_str()) {
            violations.push(StepViolation::DuplicateOption { option: option.clone() });
        }
    }
    let texts = std::iter::once(def.step_id.as_str())
        .chain(std::iter::once(def.prompt.as_str()))
        .chain(def.options.iter().map(String::as_str));
    if !texts.into_iter().all(is_xml_safe) {
        violations.push(StepViolation::IllegalCharacter);
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("unknown auditor kind {0:?}")]
    UnknownAuditorKind(String),
    #[error("auditor {0:?} listed more than once")]
    DuplicateAuditor(String),
    #[error("unknown step kind {0:?}")]
    UnknownStepKind(String),
    #[error("step {step_id} is invalid: {violations:?}")]
    InvalidStep {
        step_id: StepId,
        violations: Vec<StepViolation>,
    },
    #[error("step id {0} is used more than once")]
    DuplicateStepId(StepId),
    #[error("{field} contains characters that cannot be exported")]
    IllegalText { field: &'static str },
    #[error("a task needs at least one step to be published")]
    EmptyTask,
    #[error("cannot move a task from {from} to {to}")]
    IllegalTransition { from: TaskStatus, to: TaskStatus },
    #[error("task is not published")]
    TaskNotPublished,
}

/// Builds a draft task from an authoring spec, keeping the authored step order.
pub fn create_task(
    spec: TaskSpec,
    registry: &PluginRegistry,
    now: DateTime<Utc>,
) -> Result<TaskDefinition, DomainError> {
    if !is_xml_safe(&spec.name) {
        return Err(DomainError::IllegalText { field: "name" });
    }
    if !is_xml_safe(&spec.description) {
        return Err(DomainError::IllegalText { field: "description" });
    }

    let mut auditors = BTreeSet::new();
    for kind in spec.auditors {
        if registry.auditor(&kind).is_none() {
            return Err(DomainError::UnknownAuditorKind(kind));
        }
        if auditors.contains(&kind) {
            return Err(DomainError::DuplicateAuditor(kind));
        }
        auditors.insert(kind);
    }

    let mut steps = Vec::with_capacity(spec.steps.len());
    let mut ids = HashSet::new();
    for (i, step) in spec.steps.into_iter().enumerate() {
        let def = StepDefinition {
            step_id: StepId(step.step_id.unwrap_or_else(|| format!("s{}", i + 1))),
            kind: step.kind,
            prompt: step.prompt,
            options: step.options,
            required: step.required,
        };
        if let Err(violations) = validate_step(&def) {
            return Err(DomainError::InvalidStep {
                step_id: def.step_id,
                violations,
            });
        }
        if registry.step_plugin(def.kind.name()).is_none() {
            return Err(DomainError::UnknownStepKind(def.kind.name().to_owned()));
        }
        if !ids.insert(def.step_id.clone()) {
            return Err(DomainError::DuplicateStepId(def.step_id));
        }
        steps.push(def);
    }

    Ok(TaskDefinition {
        task_id: TaskId::generate(),
        name: spec.name,
        description: spec.description,
        steps,
        ordering_mode: spec.ordering_mode,
        auditors,
        status: TaskStatus::Draft,
        // Millisecond precision so the timestamp survives storage and export unchanged.
        created_at: DateTime::from_timestamp_millis(now.timestamp_millis()).unwrap_or(now),
    })
}

fn transition(mut task: TaskDefinition, to: TaskStatus) -> Result<TaskDefinition, DomainError> {
    if !task.status.can_transition_to(to) {
        return Err(DomainError::IllegalTransition { from: task.status, to });
    }
    task.status = to;
    Ok(task)
}

pub fn publish_task(task: TaskDefinition) -> Result<TaskDefinition, DomainError> {
    if task.status == TaskStatus::Draft && task.steps.is_empty() {
        return Err(DomainError::EmptyTask);
    }
    transition(task, TaskStatus::Published)
}

pub fn close_task(task: TaskDefinition) -> Result<TaskDefinition, DomainError> {
    transition(task, TaskStatus::Closed)
}
