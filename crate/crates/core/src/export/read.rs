//! Strict reader for the export format.
//!
//! Tokenizing is done by quick-xml; the grammar is checked here. Unknown
//! elements, missing elements and out-of-order children are all rejected.

use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, Utc};
use quick_xml::events::Event;
use quick_xml::Reader;
use thiserror::Error;

use super::model::*;
use crate::audit::{FingerprintVector, FINGERPRINT_FIELDS};
use crate::domain::{
    Aggregation, AnswerValue, FieldSpec, OrderingMode, Scalar, ScalarType, StepDefinition, StepKind, TaskStatus,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExportError {
    #[error("malformed XML at line {line}: {reason}")]
    MalformedXml { line: usize, reason: String },
    #[error("schema violation at {path}: {reason}")]
    SchemaViolation { path: String, reason: String },
}

#[derive(Debug)]
enum Token {
    Open { name: String, attrs: Vec<(String, String)> },
    Close,
    Text(String),
}

struct Tokens {
    tokens: Vec<(Token, usize)>,
}

fn tokenize(input: &str) -> Result<Tokens, ExportError> {
    let line_of = |pos: u64| {
        input.as_bytes()[..(pos as usize).min(input.len())]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1
    };
    let mut reader = Reader::from_str(input);
    reader.config_mut().check_end_names = true;
    let mut tokens: Vec<(Token, usize)> = Vec::new();
    let mut seen_root = false;
    let mut depth = 0usize;
    // Line of `counted_to`, advanced as the reader moves forward.
    let (mut counted_to, mut line) = (0usize, 1usize);
    loop {
        let pos = reader.buffer_position();
        let malformed = |reason: String, at: u64| ExportError::MalformedXml {
            line: line_of(at),
            reason,
        };
        let event = reader
            .read_event()
            .map_err(|e| malformed(e.to_string(), reader.error_position()))?;
        let upto = (pos as usize).min(input.len());
        line += input.as_bytes()[counted_to..upto]
            .iter()
            .filter(|&&b| b == b'\n')
            .count();
        counted_to = upto;
        let push_text = |tokens: &mut Vec<(Token, usize)>, text: &str| match tokens.last_mut() {
            Some((Token::Text(t), _)) => t.push_str(text),
            _ => tokens.push((Token::Text(text.to_owned()), line)),
        };
        match event {
            Event::Decl(_) if tokens.is_empty() && !seen_root => {}
            Event::Start(ref e) | Event::Empty(ref e) => {
                if depth == 0 && seen_root {
                    return Err(malformed("content after the root element".into(), pos));
                }
                seen_root = true;
                let name = String::from_utf8(e.name().as_ref().to_vec())
                    .map_err(|_| malformed("element name is not UTF-8".into(), pos))?;
                let mut attrs = Vec::new();
                for attr in e.attributes() {
                    let attr = attr.map_err(|err| malformed(err.to_string(), pos))?;
                    let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
                    let value = attr
                        .unescape_value()
                        .map_err(|err| malformed(err.to_string(), pos))?
                        .into_owned();
                    attrs.push((key, value));
                }
                tokens.push((Token::Open { name, attrs }, line));
                if matches!(event, Event::Empty(_)) {
                    tokens.push((Token::Close, line));
                } else {
                    depth += 1;
                }
            }
            Event::End(_) => {
                depth -= 1;
                tokens.push((Token::Close, line));
            }
            Event::Text(t) => {
                let text = t.decode().map_err(|err| malformed(err.to_string(), pos))?;
                if depth == 0 {
                    if !text.trim().is_empty() {
                        return Err(malformed("text outside the root element".into(), pos));
                    }
                } else {
                    push_text(&mut tokens, &text);
                }
            }
            Event::CData(c) => {
                let text = c.decode().map_err(|err| malformed(err.to_string(), pos))?;
                push_text(&mut tokens, &text);
            }
            Event::GeneralRef(r) => {
                let resolved = if r.is_char_ref() {
                    r.resolve_char_ref()
                        .map_err(|err| malformed(err.to_string(), pos))?
                        .ok_or_else(|| malformed("invalid character reference".into(), pos))?
                        .to_string()
                } else {
                    let name = r.decode().map_err(|err| malformed(err.to_string(), pos))?;
                    quick_xml::escape::resolve_predefined_entity(&name)
                        .ok_or_else(|| malformed(format!("unknown entity &{name};"), pos))?
                        .to_owned()
                };
                push_text(&mut tokens, &resolved);
            }
            Event::Comment(_) => {}
            Event::Eof => break,
            other => return Err(malformed(format!("unsupported markup {other:?}"), pos)),
        }
    }
    if !seen_root {
        return Err(ExportError::MalformedXml {
            line: line_of(input.len() as u64),
            reason: "no root element".into(),
        });
    }
    if depth != 0 {
        return Err(ExportError::MalformedXml {
            line: line_of(input.len() as u64),
            reason: "unclosed element".into(),
        });
    }
    Ok(Tokens { tokens })
}

struct Cursor {
    tokens: std::iter::Peekable<std::vec::IntoIter<(Token, usize)>>,
    path: Vec<String>,
}

impl Cursor {
    fn violation(&self, reason: impl Into<String>) -> ExportError {
        ExportError::SchemaViolation {
            path: self.path.join("/"),
            reason: reason.into(),
        }
    }

    fn violation_at(&self, child: &str, reason: impl Into<String>) -> ExportError {
        let mut path = self.path.join("/");
        path.push('/');
        path.push_str(child);
        ExportError::SchemaViolation {
            path,
            reason: reason.into(),
        }
    }

    /// Skips inter-element whitespace; other text between elements is an error.
    fn skip_ws(&mut self) -> Result<(), ExportError> {
        while let Some((Token::Text(t), _)) = self.tokens.peek() {
            if !t.chars().all(|c| matches!(c, ' ' | '\n' | '\t' | '\r')) {
                return Err(self.violation("unexpected text"));
            }
            self.tokens.next();
        }
        Ok(())
    }

    fn peek_open(&mut self) -> Result<Option<&str>, ExportError> {
        self.skip_ws()?;
        Ok(match self.tokens.peek() {
            Some((Token::Open { name, .. }, _)) => Some(name.as_str()),
            _ => None,
        })
    }

    fn open_with_attrs(&mut self, expected: &str) -> Result<Vec<(String, String)>, ExportError> {
        self.skip_ws()?;
        match self.tokens.next() {
            Some((Token::Open { name, attrs }, _)) if name == expected => {
                self.path.push(name);
                Ok(attrs)
            }
            Some((Token::Open { name, .. }, _)) => Err(self.violation_at(&name, format!("expected <{expected}>"))),
            _ => Err(self.violation(format!("missing <{expected}>"))),
        }
    }

    fn open(&mut self, expected: &str) -> Result<(), ExportError> {
        let attrs = self.open_with_attrs(expected)?;
        if !attrs.is_empty() {
            return Err(self.violation("unexpected attributes"));
        }
        Ok(())
    }

    fn close(&mut self) -> Result<(), ExportError> {
        self.skip_ws()?;
        match self.tokens.next() {
            Some((Token::Close, _)) => {
                self.path.pop();
                Ok(())
            }
            Some((Token::Open { name, .. }, _)) => Err(self.violation_at(&name, "unexpected element")),
            _ => Err(self.violation("unexpected end of document")),
        }
    }

    fn at_close(&mut self) -> Result<bool, ExportError> {
        self.skip_ws()?;
        Ok(matches!(self.tokens.peek(), Some((Token::Close, _))))
    }

    /// Reads `<name>text</name>` (or `<name/>` as empty text) without trimming.
    fn leaf(&mut self, name: &str) -> Result<String, ExportError> {
        self.open(name)?;
        let text = match self.tokens.peek() {
            Some((Token::Text(_), _)) => match self.tokens.next() {
                Some((Token::Text(t), _)) => t,
                _ => unreachable!(),
            },
            _ => String::new(),
        };
        match self.tokens.next() {
            Some((Token::Close, _)) => {
                self.path.pop();
                Ok(text)
            }
            _ => Err(self.violation("expected text only")),
        }
    }

    fn parsed_leaf<T>(&mut self, name: &str, parse: impl FnOnce(&str) -> Option<T>) -> Result<T, ExportError> {
        let text = self.leaf(name)?;
        parse(&text).ok_or_else(|| self.violation_at(name, format!("invalid value {text:?}")))
    }

    fn pk_leaf(&mut self, name: &str) -> Result<i64, ExportError> {
        self.parsed_leaf(name, |t| t.parse::<i64>().ok().filter(|&v| v >= 1))
    }

    fn expect_leaf(&mut self, name: &str, expected: &str) -> Result<(), ExportError> {
        let text = self.leaf(name)?;
        if text != expected {
            return Err(self.violation_at(name, format!("expected {expected:?}, found {text:?}")));
        }
        Ok(())
    }

    /// Reads `<name>` holding zero or more `<item>` children.
    fn list<T>(
        &mut self,
        name: &str,
        item: &str,
        mut each: impl FnMut(&mut Self, usize) -> Result<T, ExportError>,
    ) -> Result<Vec<T>, ExportError> {
        self.open(name)?;
        let mut out = Vec::new();
        while !self.at_close()? {
            match self.peek_open()? {
                Some(n) if n == item => {}
                Some(n) => {
                    let n = n.to_owned();
                    return Err(self.violation_at(&n, format!("expected <{item}>")));
                }
                None => return Err(self.violation("unexpected end of document")),
            }
            out.push(each(self, out.len())?);
        }
        self.close()?;
        Ok(out)
    }

    fn field_schema(&mut self, name: &str) -> Result<Vec<FieldSpec>, ExportError> {
        self.list(name, "field", |c, _| {
            c.open("field")?;
            let name = c.leaf("name")?;
            let ty = c.parsed_leaf("type", ScalarType::parse)?;
            c.close()?;
            Ok(FieldSpec { name, ty })
        })
    }
}

fn timestamp(text: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(text).ok().map(|t| t.with_timezone(&Utc))
}

/// Parses an export produced by [`serialize_document`](super::serialize_document).
pub fn parse_export(input: &[u8]) -> Result<ExportDocument, ExportError> {
    let text = std::str::from_utf8(input).map_err(|e| {
        let line = input[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        ExportError::MalformedXml {
            line,
            reason: "input is not UTF-8".into(),
        }
    })?;
    let tokens = tokenize(text)?;
    let mut c = Cursor {
        tokens: tokens.tokens.into_iter().peekable(),
        path: Vec::new(),
    };

    let attrs = c.open_with_attrs("export")?;
    let version = match attrs.as_slice() {
        [(k, v)] if k == "version" => v.parse::<u32>().ok(),
        _ => None,
    };
    let version = match version {
        Some(v) if v == EXPORT_VERSION => v,
        _ => return Err(c.violation("expected version=\"1\"")),
    };

    c.open("task")?;
    let task_id = c.leaf("task_id")?.into();
    let name = c.leaf("name")?;
    let description = c.leaf("description")?;
    let ordering_mode = c.parsed_leaf("ordering_mode", OrderingMode::parse)?;
    let status = c.parsed_leaf("status", TaskStatus::parse)?;
    let created_at = c.parsed_leaf("created_at", timestamp)?;
    let steps = c.list("step_definitions", "step", |c, _| read_step(c))?;
    let auditors = c.list("auditor_definitions", "auditor", |c, _| {
        c.open("auditor")?;
        let kind = c.leaf("kind")?;
        let model_label = c.leaf("model")?;
        let aggregation = c.parsed_leaf("aggregation", Aggregation::parse)?;
        let field_schema = c.field_schema("field_schema")?;
        c.close()?;
        Ok(AuditorSchema {
            kind,
            model_label,
            aggregation,
            field_schema,
        })
    })?;
    if auditors.windows(2).any(|w| w[0].kind >= w[1].kind) {
        return Err(c.violation_at("auditor_definitions", "auditors must be sorted by kind"));
    }
    let mut step_ids = HashSet::new();
    if !steps.iter().all(|s| step_ids.insert(s.definition.step_id.clone())) {
        return Err(c.violation_at("step_definitions", "duplicate step id"));
    }

    let task = ExportedTask {
        task_id,
        name,
        description,
        ordering_mode,
        status,
        created_at,
        steps,
        auditors,
    };
    let responses = c.list("responses", "response", |c, _| read_response(c, &task))?;
    if responses.windows(2).any(|w| w[0].record.pk >= w[1].record.pk) {
        return Err(c.violation_at("responses", "responses must be ascending by pk"));
    }
    c.close()?;
    c.close()?;
    c.skip_ws()?;
    if c.tokens.next().is_some() {
        return Err(c.violation("content after the root element"));
    }
    Ok(ExportDocument {
        version,
        task,
        responses,
    })
}

fn read_step(c: &mut Cursor) -> Result<ExportedStep, ExportError> {
    c.open("step")?;
    let step_id = c.leaf("step_id")?.into();
    let kind = StepKind::from(c.leaf("kind")?);
    let prompt = c.leaf("prompt")?;
    let required = c.parsed_leaf("required", |t| t.parse::<bool>().ok())?;
    let options = c.list("options", "option", |c, _| c.leaf("option"))?;
    let answer_schema = if kind.is_builtin() {
        None
    } else {
        Some(c.field_schema("answer_schema")?)
    };
    c.close()?;
    Ok(ExportedStep {
        definition: StepDefinition {
            step_id,
            kind,
            prompt,
            options,
            required,
        },
        answer_schema,
    })
}

fn read_response(c: &mut Cursor, task: &ExportedTask) -> Result<ExportedResponse, ExportError> {
    c.open("response")?;
    c.expect_leaf("model", RESPONSE_MODEL)?;
    let pk = c.pk_leaf("pk")?;
    c.open("fields")?;
    let worker_id = c.leaf("worker_id")?;
    let assignment_id = c.leaf("assignment_id")?;
    let hit_id = c.leaf("hit_id")?;
    let step_order_seed = c.parsed_leaf("step_order_seed", |t| t.parse::<u64>().ok())?;
    let submitted_at = c.parsed_leaf("submitted_at", timestamp)?;
    c.close()?;

    c.open("fingerprint")?;
    let mut values = Vec::with_capacity(FINGERPRINT_FIELDS.len());
    for (i, name) in FINGERPRINT_FIELDS.iter().enumerate() {
        let ty = if matches!(i, 5 | 6 | 9 | 10) {
            ScalarType::Float
        } else {
            ScalarType::Integer
        };
        values.push(c.parsed_leaf(name, |t| ty.parse_value(t))?);
    }
    let fingerprint = FingerprintVector::from_scalars(&values)
        .ok_or_else(|| c.violation("fingerprint values must be nonnegative"))?;
    c.close()?;

    let answers = c.list("steps", "list_item", |c, _| {
        c.open("list_item")?;
        c.expect_leaf("model", STEP_ANSWER_MODEL)?;
        let answer_pk = c.pk_leaf("pk")?;
        c.open("fields")?;
        let general_model = c.pk_leaf("general_model")?;
        if general_model != pk {
            return Err(c.violation_at("general_model", "does not match the owning response"));
        }
        let step_id = c.leaf("step_id")?.into();
        let step = task
            .steps
            .iter()
            .find(|s| s.definition.step_id == step_id)
            .ok_or_else(|| c.violation_at("step_id", "unknown step"))?;
        let value = read_answer(c, step)?;
        c.close()?;
        c.close()?;
        Ok(StepAnswerRow {
            pk: answer_pk,
            general_model,
            step_id,
            value,
        })
    })?;
    if answers.windows(2).any(|w| w[0].pk >= w[1].pk) {
        return Err(c.violation_at("steps", "answers must be ascending by pk"));
    }

    c.open("auditors")?;
    let mut auditors = BTreeMap::new();
    let mut last_kind: Option<String> = None;
    while !c.at_close()? {
        let kind = match c.peek_open()? {
            Some(k) => k.to_owned(),
            None => return Err(c.violation("unexpected end of document")),
        };
        let schema = task
            .auditors
            .iter()
            .find(|a| a.kind == kind)
            .ok_or_else(|| c.violation_at(&kind, "unknown auditor kind"))?;
        if last_kind.as_ref().is_some_and(|last| last >= &kind) {
            return Err(c.violation_at(&kind, "auditor blocks must be sorted by name"));
        }
        let rows = c.list(&kind, "list_item", |c, _| read_auditor_row(c, schema, pk))?;
        if rows.windows(2).any(|w| w[0].pk >= w[1].pk) {
            return Err(c.violation_at(&kind, "rows must be ascending by pk"));
        }
        last_kind = Some(kind.clone());
        auditors.insert(kind, rows);
    }
    c.close()?;
    c.close()?;

    Ok(ExportedResponse {
        record: ResponseRecord {
            pk,
            task_id: task.task_id.clone(),
            worker_id,
            assignment_id,
            hit_id,
            step_order_seed,
            answers,
            submitted_at,
            fingerprint,
        },
        auditors,
    })
}

fn read_answer(c: &mut Cursor, step: &ExportedStep) -> Result<AnswerValue, ExportError> {
    let n_options = step.definition.options.len() as u32;
    let index = |t: &str| t.parse::<u32>().ok().filter(|&i| i < n_options);
    match &step.definition.kind {
        StepKind::MultipleChoice => c.parsed_leaf("value", |t| index(t).map(AnswerValue::Choice)),
        StepKind::MultipleAnswer => c.parsed_leaf("value", |t| {
            if t.is_empty() {
                return Some(AnswerValue::Choices(Vec::new()));
            }
            let v = t.split(',').map(index).collect::<Option<Vec<u32>>>()?;
            v.windows(2).all(|w| w[0] < w[1]).then_some(AnswerValue::Choices(v))
        }),
        StepKind::TextResponse => Ok(AnswerValue::Text(c.leaf("value")?)),
        StepKind::Custom(_) => {
            let schema = step.answer_schema.as_deref().unwrap_or_default();
            c.open("value")?;
            let mut fields = Vec::with_capacity(schema.len());
            for f in schema {
                fields.push((f.name.clone(), c.parsed_leaf(&f.name, |t| f.ty.parse_value(t))?));
            }
            c.close()?;
            Ok(AnswerValue::Custom(fields))
        }
    }
}

fn read_auditor_row(c: &mut Cursor, schema: &AuditorSchema, owner: i64) -> Result<AuditorRow, ExportError> {
    c.open("list_item")?;
    c.expect_leaf("model", &schema.model_label)?;
    let pk = c.pk_leaf("pk")?;
    c.open("fields")?;
    let general_model = c.pk_leaf("general_model")?;
    if general_model != owner {
        return Err(c.violation_at("general_model", "does not match the owning response"));
    }
    let mut fields = Vec::with_capacity(schema.field_schema.len());
    for f in &schema.field_schema {
        let value: Scalar = c.parsed_leaf(&f.name, |t| f.ty.parse_value(t))?;
        fields.push((f.name.clone(), value));
    }
    c.close()?;
    c.close()?;
    Ok(AuditorRow {
        model: schema.model_label.clone(),
        pk,
        general_model,
        fields,
    })
}
