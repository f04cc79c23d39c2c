//! Inputs shared by the benchmarks.

use chrono::DateTime;
use turkey_core::audit::{AuditEvent, FocusState, SessionEventLog};
use turkey_core::domain::{SplitMix64, BUILTIN_AUDITORS};
use turkey_core::service::{AnswerInput, Handshake, IngestRequest, SubmitRequest};
use turkey_core::{
    OrderingMode, PluginRegistry, Service, ServiceConfig, StepDefinition, StepKind, Store, TaskDefinition, TaskId,
    TaskSpec, TaskStatus,
};

/// `n` events over all built-in kinds, in time order.
pub fn events(n: usize, seed: u64) -> Vec<AuditEvent> {
    let mut rng = SplitMix64::new(seed);
    let mut t = 0;
    let mut blurred = false;
    (0..n)
        .map(|_| {
            let r = rng.next_u64();
            t += r % 300;
            let (x, y) = ((r >> 16) as u32 % 1920, (r >> 32) as u32 % 1080);
            match (r >> 48) % 8 {
                0..=3 => AuditEvent::mouse(t, x, y),
                4 => AuditEvent::click(t, x, y, "#next"),
                5 => AuditEvent::keypress(t),
                6 => AuditEvent::resize(t, x, y),
                _ => {
                    blurred = !blurred;
                    AuditEvent::focus(t, if blurred { FocusState::Blur } else { FocusState::Focus })
                }
            }
        })
        .collect()
}

pub fn finalized_log(n: usize) -> SessionEventLog {
    let mut log = SessionEventLog::new("bench", BUILTIN_AUDITORS);
    for e in events(n, 7) {
        log.append(e).expect("built-in kind");
    }
    log.finalize().expect("fresh log");
    log
}

pub fn randomized_task(steps: usize) -> TaskDefinition {
    TaskDefinition {
        task_id: TaskId::from("bench"),
        name: "bench".into(),
        description: String::new(),
        steps: (1..=steps)
            .map(|i| StepDefinition {
                step_id: format!("s{i}").into(),
                kind: StepKind::TextResponse,
                prompt: "?".into(),
                options: vec![],
                required: true,
            })
            .collect(),
        ordering_mode: OrderingMode::Randomized,
        auditors: Default::default(),
        status: TaskStatus::Published,
        created_at: DateTime::from_timestamp_millis(0).unwrap_or_default(),
    }
}

/// An in-memory service holding one published task with every built-in
/// auditor and `responses` submitted responses of `events_each` events.
pub fn populated_service(responses: usize, events_each: usize) -> (Service, TaskId) {
    let store = Store::open_in_memory().expect("in-memory store");
    let svc = Service::new(store, PluginRegistry::with_builtins(None), ServiceConfig::new("bench"));
    let spec = TaskSpec {
        name: "bench".into(),
        description: String::new(),
        steps: vec![turkey_core::domain::StepSpec {
            step_id: None,
            kind: StepKind::TextResponse,
            prompt: "Describe it".into(),
            options: vec![],
            required: true,
        }],
        ordering_mode: OrderingMode::Fixed,
        auditors: BUILTIN_AUDITORS.iter().map(|s| s.to_string()).collect(),
    };
    let task = svc.create_task(spec).expect("valid spec").task_id;
    svc.publish_task(&task).expect("draft task");
    for i in 0..responses {
        submit_one(&svc, &task, &format!("A{i}"), events_each);
    }
    (svc, task)
}

/// Runs one worker through handshake, a single batch and submit.
pub fn submit_one(svc: &Service, task: &TaskId, assignment: &str, n: usize) -> i64 {
    let hs = Handshake::live(assignment, "H", "W", "https://workersandbox.mturk.com");
    let token = svc.get_task_bundle(task, &hs).expect("handshake").session_token;
    let evs = events(n, n as u64);
    let wire: Vec<_> = evs.iter().map(AuditEvent::to_wire).collect();
    svc.ingest_batch(
        &token,
        &IngestRequest {
            batch_seq: 1,
            events: wire,
        },
    )
    .expect("batch");
    let req = SubmitRequest {
        answers: vec![AnswerInput {
            step_id: "s1".into(),
            value: serde_json::json!("a < b & c"),
        }],
        events: vec![],
        end_ms: evs.last().map_or(0, |e| e.t_ms),
    };
    svc.submit_response(&token, &req).expect("submit").response_pk
}
