use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::audit::FingerprintVector;
use crate::domain::{
    Aggregation, AnswerValue, AuditorDescriptor, FieldSpec, OrderingMode, Scalar, StepDefinition, StepId, TaskId,
    TaskStatus,
};

pub const EXPORT_VERSION: u32 = 1;
pub const RESPONSE_MODEL: &str = "survey.response";
pub const STEP_ANSWER_MODEL: &str = "survey.stepanswer";

#[derive(Debug, Clone, PartialEq)]
pub struct ExportDocument {
    pub version: u32,
    pub task: ExportedTask,
    /// Ascending by response pk.
    pub responses: Vec<ExportedResponse>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportedTask {
    pub task_id: TaskId,
    pub name: String,
    pub description: String,
    pub ordering_mode: OrderingMode,
    pub status: TaskStatus,
    pub created_at: DateTime<Utc>,
    /// Authored order.
    pub steps: Vec<ExportedStep>,
    /// Ascending by kind.
    pub auditors: Vec<AuditorSchema>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportedStep {
    pub definition: StepDefinition,
    /// Present for custom step kinds only.
    pub answer_schema: Option<Vec<FieldSpec>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditorSchema {
    pub kind: String,
    pub model_label: String,
    pub aggregation: Aggregation,
    pub field_schema: Vec<FieldSpec>,
}

impl From<&AuditorDescriptor> for AuditorSchema {
    fn from(d: &AuditorDescriptor) -> Self {
        Self {
            kind: d.kind.clone(),
            model_label: d.model_label.clone(),
            aggregation: d.aggregation,
            field_schema: d.field_schema.clone(),
        }
    }
}

/// One worker's completed assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub pk: i64,
    pub task_id: TaskId,
    pub worker_id: String,
    pub assignment_id: String,
    pub hit_id: String,
    pub step_order_seed: u64,
    /// Ascending by pk.
    pub answers: Vec<StepAnswerRow>,
    pub submitted_at: DateTime<Utc>,
    pub fingerprint: FingerprintVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAnswerRow {
    pub pk: i64,
    pub general_model: i64,
    pub step_id: StepId,
    pub value: AnswerValue,
}

/// One exported auditor data row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditorRow {
    pub model: String,
    pub pk: i64,
    /// Primary key of the owning response.
    pub general_model: i64,
    /// In the auditor's field-schema order, without `general_model`.
    pub fields: Vec<(String, Scalar)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportedResponse {
    pub record: ResponseRecord,
    /// Keyed by auditor kind; rows ascending by pk.
    pub auditors: BTreeMap<String, Vec<AuditorRow>>,
}

impl ExportDocument {
    pub fn auditor_rows(&self) -> impl Iterator<Item = &AuditorRow> {
        self.responses.iter().flat_map(|r| r.auditors.values().flatten())
    }

    pub fn auditor_schema(&self, kind: &str) -> Option<&AuditorSchema> {
        self.task.auditors.iter().find(|a| a.kind == kind)
    }
}
