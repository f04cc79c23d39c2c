use std::sync::Arc;

use serde_json::{json, Value};
use turkey_core::service::{IngestAck, SubmitResult, TaskBundle};
use turkey_core::{parse_export, Aggregation, Scalar, Store};

use crate::support::{
    self, check_integrity, demo_answers, ensure, kind_counts, random_events, wire, LiveServer, Rng, ADMIN_TOKEN,
};
use crate::Check;

const SESSIONS: usize = 16;
const EVENTS: usize = 1000;

pub fn run() -> Check {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?
        .block_on(run_async())
}

async fn run_async() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = Store::open(&support::temp_db(dir.path())).map_err(|e| e.to_string())?;
    let svc = Arc::new(support::service(store));
    let task = support::demo_task(&svc);
    let server = LiveServer::start(svc.clone()).await;
    let url = server.url();
    let client = reqwest::Client::new();

    let mut sessions = tokio::task::JoinSet::new();
    for i in 0..SESSIONS {
        let (client, url, task) = (client.clone(), url.clone(), task.to_string());
        sessions.spawn(async move { session(&client, &url, &task, i).await });
    }
    let mut generated = Vec::new();
    let mut replays = 0;
    while let Some(joined) = sessions.join_next().await {
        let (assignment, events, replayed) = joined.map_err(|e| e.to_string())??;
        generated.push((assignment, events));
        replays += replayed;
    }

    let xml = client
        .get(format!("{url}/api/v1/tasks/{task}/export.xml"))
        .bearer_auth(ADMIN_TOKEN)
        .send()
        .await
        .map_err(|e| e.to_string())?
        .bytes()
        .await
        .map_err(|e| e.to_string())?;
    server.stop().await;
    let doc = parse_export(&xml).map_err(|e| e.to_string())?;
    ensure!(
        doc.responses.len() == SESSIONS,
        "export holds {} responses",
        doc.responses.len()
    );
    check_integrity(&doc)?;

    for (assignment, events) in &generated {
        let resp = doc
            .responses
            .iter()
            .find(|r| &r.record.assignment_id == assignment)
            .ok_or_else(|| format!("{assignment} missing from export"))?;
        for (kind, want) in kind_counts(events) {
            let schema = doc
                .auditor_schema(&kind)
                .ok_or_else(|| format!("{kind} not exported"))?;
            let rows = resp.auditors.get(&kind).map(Vec::as_slice).unwrap_or(&[]);
            let got = match schema.aggregation {
                Aggregation::EventList => rows.len(),
                Aggregation::Counter => match rows {
                    [row] => match row.fields.as_slice() {
                        [(_, Scalar::Integer(n))] => *n as usize,
                        other => return Err(format!("{assignment} {kind}: counter fields {other:?}")),
                    },
                    _ => return Err(format!("{assignment} {kind}: {} counter rows", rows.len())),
                },
            };
            ensure!(got == want, "{assignment} {kind}: exported {got}, generated {want}");
        }
    }
    Ok(format!(
        "{SESSIONS} sessions x {EVENTS} events, {replays} replayed batches, no loss; pks dense"
    ))
}

/// One worker: handshake, batches sent out of order with replays, submit.
async fn session(
    client: &reqwest::Client,
    url: &str,
    task: &str,
    index: usize,
) -> Result<(String, Vec<turkey_core::AuditEvent>, usize), String> {
    let mut rng = Rng::new(0x5eed_0600 + index as u64);
    let assignment = format!("CONC-{index}");
    let bundle: TaskBundle = client
        .get(format!("{url}/t/{task}"))
        .query(&[
            ("assignmentId", assignment.as_str()),
            ("hitId", "H"),
            ("workerId", &format!("W{index}")),
            ("turkSubmitTo", "https://workersandbox.mturk.com"),
        ])
        .header("accept", "application/json")
        .send()
        .await
        .and_then(|r| r.error_for_status())
        .map_err(|e| e.to_string())?
        .json()
        .await
        .map_err(|e| e.to_string())?;
    let token = bundle.session_token;

    let events = random_events(&mut rng, EVENTS);
    let mut batches = Vec::new();
    let mut rest = &events[..];
    while !rest.is_empty() {
        let n = (rng.range(1, 120) as usize).min(rest.len());
        batches.push(rest[..n].to_vec());
        rest = &rest[n..];
    }
    let mut sends: Vec<usize> = (0..batches.len()).collect();
    for i in 0..batches.len() {
        if rng.chance(0.3) {
            sends.push(i);
        }
    }
    for i in (1..sends.len()).rev() {
        let j = rng.range(0, i as u64 + 1) as usize;
        sends.swap(i, j);
    }

    let endpoint = format!("{url}/api/v1/sessions/{token}/events");
    let mut acks: Vec<Option<IngestAck>> = vec![None; batches.len()];
    let mut in_flight = tokio::task::JoinSet::new();
    for chunk in sends.chunks(4) {
        for &b in chunk {
            let body = json!({ "batch_seq": b + 1, "events": wire(&batches[b]) });
            let (client, endpoint) = (client.clone(), endpoint.clone());
            in_flight.spawn(async move { (b, post(&client, &endpoint, &body).await) });
        }
        while let Some(done) = in_flight.join_next().await {
            let (b, ack) = done.map_err(|e| e.to_string())?;
            let ack: IngestAck = serde_json::from_value(ack?).map_err(|e| e.to_string())?;
            ensure!(
                ack.accepted == batches[b].len() && ack.rejected.is_empty(),
                "{assignment} batch {}: {ack:?}",
                b + 1
            );
            if let Some(first) = &acks[b] {
                ensure!(first == &ack, "{assignment} batch {}: replay ack differs", b + 1);
            }
            acks[b] = Some(ack);
        }
    }

    let end_ms = events.iter().map(|e| e.t_ms).max().unwrap_or(0);
    let body = json!({ "answers": demo_answers(&mut rng), "events": [], "end_ms": end_ms });
    let result: SubmitResult =
        serde_json::from_value(post(client, &format!("{url}/api/v1/sessions/{token}/submit"), &body).await?)
            .map_err(|e| e.to_string())?;
    ensure!(
        result.event_count == EVENTS,
        "{assignment}: server holds {} events",
        result.event_count
    );
    Ok((assignment, events, sends.len() - batches.len()))
}

async fn post(client: &reqwest::Client, url: &str, body: &Value) -> Result<Value, String> {
    let resp = client.post(url).json(body).send().await.map_err(|e| e.to_string())?;
    let status = resp.status();
    let text = resp.text().await.map_err(|e| e.to_string())?;
    ensure!(status.is_success(), "{url}: HTTP {status}: {text}");
    serde_json::from_str(&text).map_err(|e| e.to_string())
}
