use turkey_core::audit::AuditEvent;
use turkey_core::domain::{OrderingMode, StepKind, StepSpec};
use turkey_core::service::{AnswerInput, Handshake, IngestRequest, SubmitRequest};
use turkey_core::{Store, TaskSpec};

use crate::support::{self, ensure, wire};
use crate::Check;

/// Reference subtree: four clicks, clicks_total only, first response.
const EXPECTED: &str = "\
<auditors>
  <clicks_total>
    <list_item>
      <model>survey.auditorclickstotaldata</model>
      <pk>1</pk>
      <fields>
        <general_model>1</general_model>
        <count>4</count>
      </fields>
    </list_item>
  </clicks_total>
</auditors>
";

pub fn run() -> Check {
    let svc = support::service(Store::open_in_memory().map_err(|e| e.to_string())?);
    let spec = TaskSpec {
        name: "Label the image".into(),
        description: String::new(),
        steps: vec![StepSpec {
            step_id: None,
            kind: StepKind::MultipleChoice,
            prompt: "Which animal?".into(),
            options: vec!["cat".into(), "dog".into(), "turkey".into()],
            required: true,
        }],
        ordering_mode: OrderingMode::Fixed,
        auditors: vec!["clicks_total".into()],
    };
    let task = svc.create_task(spec).map_err(|e| e.to_string())?.task_id;
    svc.publish_task(&task).map_err(|e| e.to_string())?;
    let bundle = svc
        .get_task_bundle(
            &task,
            &Handshake::live("A1", "H1", "W1", "https://workersandbox.mturk.com"),
        )
        .map_err(|e| e.to_string())?;
    let clicks: Vec<_> = (1..=4)
        .map(|i| AuditEvent::click(i * 700, 120, 80 + i as u32, "#option-2"))
        .collect();
    let ack = svc
        .ingest_batch(
            &bundle.session_token,
            &IngestRequest {
                batch_seq: 1,
                events: wire(&clicks[..2]),
            },
        )
        .map_err(|e| e.to_string())?;
    ensure!(ack.accepted == 2, "first batch ack {ack:?}");
    let submit = SubmitRequest {
        answers: vec![AnswerInput {
            step_id: "s1".into(),
            value: serde_json::json!(2),
        }],
        events: wire(&clicks[2..]),
        end_ms: 3500,
    };
    let result = svc
        .submit_response(&bundle.session_token, &submit)
        .map_err(|e| e.to_string())?;
    ensure!(result.response_pk == 1, "response pk {}", result.response_pk);

    let xml = svc.export_xml(&task).map_err(|e| e.to_string())?;
    let got = auditors_subtree(&xml).ok_or("no <auditors> block in export")?;
    ensure!(got == EXPECTED, "subtree differs:\n{got}");
    Ok("auditors subtree is byte-identical to the reference".into())
}

/// The first `<auditors>` block, shifted left to its own indentation.
fn auditors_subtree(xml: &str) -> Option<String> {
    let lines: Vec<&str> = xml.lines().collect();
    let start = lines.iter().position(|l| l.trim_start() == "<auditors>")?;
    let len = lines[start..].iter().position(|l| l.trim_start() == "</auditors>")? + 1;
    let indent = lines[start].len() - lines[start].trim_start().len();
    let mut out = String::new();
    for line in &lines[start..start + len] {
        if !line.starts_with(&" ".repeat(indent)) {
            return None;
        }
        out.push_str(&line[indent..]);
        out.push('\n');
    }
    Some(out)
}
