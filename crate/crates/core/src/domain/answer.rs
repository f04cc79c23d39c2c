use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::registry::{Scalar, StepPluginDescriptor};
use super::task::{StepDefinition, StepKind};
use crate::text::is_xml_safe;

/// Largest accepted text answer, in bytes.
pub const MAX_TEXT_ANSWER_BYTES: usize = 64 * 1024;

/// A worker's answer to one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum AnswerValue {
    /// Index of the chosen option.
    Choice(u32),
    /// Ascending, distinct option indices.
    Choices(Vec<u32>),
    Text(String),
    /// Fields in answer-schema order.
    Custom(Vec<(String, Scalar)>),
}

impl AnswerValue {
    /// Whether the answer counts as a response to a required step.
    pub fn is_blank(&self) -> bool {
        match self {
            AnswerValue::Choices(v) => v.is_empty(),
            AnswerValue::Text(t) => t.is_empty(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnswerError {
    #[error("{0}")]
    Malformed(String),
}

fn malformed(reason: impl Into<String>) -> AnswerError {
    AnswerError::Malformed(reason.into())
}

/// Decodes a submitted JSON answer for `step`. `null` means unanswered.
pub fn decode_answer(
    step: &StepDefinition,
    plugin: Option<&StepPluginDescriptor>,
    value: &Value,
) -> Result<Option<AnswerValue>, AnswerError> {
    if value.is_null() {
        return Ok(None);
    }
    let options = step.options.len() as u64;
    let index = |v: &Value| -> Result<u32, AnswerError> {
        match v.as_u64() {
            Some(i) if i < options => Ok(i as u32),
            _ => Err(malformed(format!("expected an option index below {options}"))),
        }
    };
    let answer = match &step.kind {
        StepKind::MultipleChoice => AnswerValue::Choice(index(value)?),
        StepKind::MultipleAnswer => {
            let items = value
                .as_array()
                .ok_or_else(|| malformed("expected a list of indices"))?;
            let mut indices = items.iter().map(index).collect::<Result<Vec<_>, _>>()?;
            indices.sort_unstable();
            let before = indices.len();
            indices.dedup();
            if indices.len() != before {
                return Err(malformed("option chosen more than once"));
            }
            AnswerValue::Choices(indices)
        }
        StepKind::TextResponse => {
            let text = value.as_str().ok_or_else(|| malformed("expected a string"))?;
            if text.len() > MAX_TEXT_ANSWER_BYTES {
                return Err(malformed("text answer exceeds 64 KiB"));
            }
            if !is_xml_safe(text) {
                return Err(malformed("text contains control characters"));
            }
            AnswerValue::Text(text.to_owned())
        }
        StepKind::Custom(kind) => {
            let plugin = plugin.ok_or_else(|| malformed(format!("no plugin for {kind}")))?;
            let map = value.as_object().ok_or_else(|| malformed("expected an object"))?;
            if map.len() != plugin.answer_schema.len() {
                return Err(malformed("fields do not match the answer schema"));
            }
            let mut fields = Vec::with_capacity(map.len());
            for spec in &plugin.answer_schema {
                let v = map
                    .get(&spec.name)
                    .and_then(|v| spec.ty.from_json(v))
                    .ok_or_else(|| malformed(format!("field {} must be {}", spec.name, spec.ty.as_str())))?;
                if matches!(&v, Scalar::String(s) if !is_xml_safe(s)) {
                    return Err(malformed("text contains control characters"));
                }
                fields.push((spec.name.clone(), v));
            }
            AnswerValue::Custom(fields)
        }
    };
    Ok(Some(answer))
}
