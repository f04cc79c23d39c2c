use std::fmt::Write as _;

use chrono::SecondsFormat;

use super::model::*;
use crate::audit::FINGERPRINT_FIELDS;
use crate::domain::{AnswerValue, FieldSpec};

/// Escapes XML metacharacters. Line breaks become character references so
/// every element stays on one line.
pub fn escape_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
    out
}

struct XmlWriter {
    out: String,
    depth: usize,
}

impl XmlWriter {
    fn indent(&mut self) {
        for _ in 0..self.depth {
            self.out.push_str("  ");
        }
    }

    fn open(&mut self, name: &str) {
        self.indent();
        let _ = writeln!(self.out, "<{name}>");
        self.depth += 1;
    }

    fn close(&mut self, name: &str) {
        self.depth -= 1;
        self.indent();
        let _ = writeln!(self.out, "</{name}>");
    }

    fn empty(&mut self, name: &str) {
        self.indent();
        let _ = writeln!(self.out, "<{name}/>");
    }

    fn leaf(&mut self, name: &str, text: impl std::fmt::Display) {
        self.indent();
        let text = escape_text(&text.to_string());
        let _ = writeln!(self.out, "<{name}>{text}</{name}>");
    }

    /// Writes `name` as an empty element when there are no children.
    fn list<T>(&mut self, name: &str, items: &[T], mut each: impl FnMut(&mut Self, &T)) {
        if items.is_empty() {
            self.empty(name);
            return;
        }
        self.open(name);
        for item in items {
            each(self, item);
        }
        self.close(name);
    }

    fn fields_schema(&mut self, name: &str, fields: &[FieldSpec]) {
        self.list(name, fields, |w, f| {
            w.open("field");
            w.leaf("name", &f.name);
            w.leaf("type", f.ty.as_str());
            w.close("field");
        });
    }
}

/// Serializes a document: UTF-8, LF line endings, two spaces per level.
pub fn serialize_document(doc: &ExportDocument) -> String {
    let mut w = XmlWriter {
        out: String::new(),
        depth: 0,
    };
    w.out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(w.out, "<export version=\"{}\">", doc.version);
    w.depth = 1;

    let task = &doc.task;
    w.open("task");
    w.leaf("task_id", &task.task_id);
    w.leaf("name", &task.name);
    w.leaf("description", &task.description);
    w.leaf("ordering_mode", task.ordering_mode.as_str());
    w.leaf("status", task.status.as_str());
    w.leaf(
        "created_at",
        task.created_at.to_rfc3339_opts(SecondsFormat::Millis, true),
    );
    w.list("step_definitions", &task.steps, |w, step| {
        let def = &step.definition;
        w.open("step");
        w.leaf("step_id", &def.step_id);
        w.leaf("kind", &def.kind);
        w.leaf("prompt", &def.prompt);
        w.leaf("required", def.required);
        w.list("options", &def.options, |w, o| w.leaf("option", o));
        if let Some(schema) = &step.answer_schema {
            w.fields_schema("answer_schema", schema);
        }
        w.close("step");
    });
    w.list("auditor_definitions", &task.auditors, |w, a| {
        w.open("auditor");
        w.leaf("kind", &a.kind);
        w.leaf("model", &a.model_label);
        w.leaf("aggregation", a.aggregation.as_str());
        w.fields_schema("field_schema", &a.field_schema);
        w.close("auditor");
    });
    w.list("responses", &doc.responses, write_response);
    w.close("task");

    w.depth = 0;
    w.out.push_str("</export>\n");
    w.out
}

fn write_response(w: &mut XmlWriter, response: &ExportedResponse) {
    let r = &response.record;
    w.open("response");
    w.leaf("model", RESPONSE_MODEL);
    w.leaf("pk", r.pk);
    w.open("fields");
    w.leaf("worker_id", &r.worker_id);
    w.leaf("assignment_id", &r.assignment_id);
    w.leaf("hit_id", &r.hit_id);
    w.leaf("step_order_seed", r.step_order_seed);
    w.leaf(
        "submitted_at",
        r.submitted_at.to_rfc3339_opts(SecondsFormat::Millis, true),
    );
    w.close("fields");
    w.open("fingerprint");
    for (name, value) in FINGERPRINT_FIELDS.iter().zip(r.fingerprint.to_scalars()) {
        w.leaf(name, value);
    }
    w.close("fingerprint");
    w.list("steps", &r.answers, |w, a| {
        w.open("list_item");
        w.leaf("model", STEP_ANSWER_MODEL);
        w.leaf("pk", a.pk);
        w.open("fields");
        w.leaf("general_model", a.general_model);
        w.leaf("step_id", &a.step_id);
        match &a.value {
            AnswerValue::Choice(i) => w.leaf("value", i),
            AnswerValue::Choices(v) => {
                let joined: Vec<String> = v.iter().map(u32::to_string).collect();
                w.leaf("value", joined.join(","))
            }
            AnswerValue::Text(t) => w.leaf("value", t),
            AnswerValue::Custom(fields) => {
                w.open("value");
                for (name, v) in fields {
                    w.leaf(name, v);
                }
                w.close("value");
            }
        }
        w.close("fields");
        w.close("list_item");
    });
    let blocks: Vec<_> = response.auditors.iter().collect();
    w.list("auditors", &blocks, |w, (kind, rows)| {
        w.list(kind, rows, |w, row| {
            w.open("list_item");
            w.leaf("model", &row.model);
            w.leaf("pk", row.pk);
            w.open("fields");
            w.leaf("general_model", row.general_model);
            for (name, v) in &row.fields {
                w.leaf(name, v);
            }
            w.close("fields");
            w.close("list_item");
        });
    });
    w.close("response");
}
