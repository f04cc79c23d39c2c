//! Headless synthetic workers that drive a server through its public HTTP
//! protocol: handshake, batched event upload, submit.

mod profile;

use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};
use tokio::sync::Semaphore;
use tokio::task::JoinSet;
use turkey_core::service::{IngestAck, SubmitResult, TaskBundle};
use turkey_core::AuditEvent;

pub use profile::{script, Profile, Rng, WorkerScript};

/// Upper bound on events per uploaded batch.
pub const MAX_BATCH: usize = 200;
/// Events held back and delivered with the submission.
pub const TRAILING_EVENTS: usize = 20;
const SEND_ATTEMPTS: usize = 3;

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Server base URL, without trailing slash.
    pub url: String,
    pub task_id: String,
    pub workers: usize,
    pub profile: Profile,
    pub seed: u64,
    pub parallelism: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerOutcome {
    pub index: usize,
    pub assignment_id: String,
    pub response_pk: i64,
    pub events_generated: usize,
    pub events_accepted: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimReport {
    /// Ascending by worker index.
    pub workers: Vec<WorkerOutcome>,
}

impl SimReport {
    pub fn events_generated(&self) -> usize {
        self.workers.iter().map(|w| w.events_generated).sum()
    }

    pub fn events_accepted(&self) -> usize {
        self.workers.iter().map(|w| w.events_accepted).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimError {
    pub worker: usize,
    pub assignment_id: String,
    pub reason: String,
}

impl std::fmt::Display for SimError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "worker {} ({}): {}", self.worker, self.assignment_id, self.reason)
    }
}

impl std::error::Error for SimError {}

pub fn assignment_id(profile: Profile, seed: u64, index: usize) -> String {
    format!("SIM-{profile}-{seed}-{index}")
}

/// Runs every worker, at most `parallelism` at a time. Fails with the lowest
/// failing worker index.
pub async fn simulate(config: SimConfig) -> Result<SimReport, SimError> {
    let client = reqwest::Client::builder()
        .timeout(Duration::from_secs(60))
        .build()
        .map_err(|e| SimError {
            worker: 0,
            assignment_id: String::new(),
            reason: e.to_string(),
        })?;
    let limit = Arc::new(Semaphore::new(config.parallelism.max(1)));
    let config = Arc::new(config);
    let mut set = JoinSet::new();
    for index in 0..config.workers {
        let (client, limit, config) = (client.clone(), limit.clone(), config.clone());
        set.spawn(async move {
            let _permit = limit.acquire_owned().await.expect("semaphore is never closed");
            run_worker(&client, &config, index).await
        });
    }
    let mut outcomes = Vec::with_capacity(config.workers);
    let mut errors = Vec::new();
    while let Some(joined) = set.join_next().await {
        match joined {
            Ok(Ok(o)) => outcomes.push(o),
            Ok(Err(e)) => errors.push(e),
            Err(e) => errors.push(SimError {
                worker: usize::MAX,
                assignment_id: String::new(),
                reason: e.to_string(),
            }),
        }
    }
    if let Some(e) = errors.into_iter().min_by_key(|e| e.worker) {
        return Err(e);
    }
    outcomes.sort_by_key(|o| o.index);
    Ok(SimReport { workers: outcomes })
}

async fn run_worker(client: &reqwest::Client, config: &SimConfig, index: usize) -> Result<WorkerOutcome, SimError> {
    let assignment_id = assignment_id(config.profile, config.seed, index);
    let fail = |reason: String| SimError {
        worker: index,
        assignment_id: assignment_id.clone(),
        reason,
    };

    let bundle: TaskBundle = {
        let url = format!("{}/t/{}", config.url, config.task_id);
        let query = [
            ("assignmentId", assignment_id.clone()),
            ("hitId", format!("SIM-HIT-{}", config.seed)),
            ("workerId", format!("SIMW-{}-{index}", config.profile)),
            ("turkSubmitTo", "https://workersandbox.mturk.com".to_string()),
        ];
        let resp = client
            .get(url)
            .query(&query)
            .header(reqwest::header::ACCEPT, "application/json")
            .send()
            .await
            .map_err(|e| fail(format!("handshake: {e}")))?;
        expect_json(resp, "handshake").await.map_err(fail)?
    };
    if bundle.preview || bundle.session_token.is_empty() {
        return Err(fail("handshake returned a preview bundle".into()));
    }

    let mut rng = Rng::for_worker(config.profile, config.seed, index);
    let script = script(
        config.profile,
        &mut rng,
        &bundle.steps,
        &bundle.step_plugins,
        &bundle.auditors,
    );
    let split = script.events.len().saturating_sub(TRAILING_EVENTS);
    let (streamed, trailing) = script.events.split_at(split);

    let events_url = format!("{}/api/v1/sessions/{}/events", config.url, bundle.session_token);
    for (seq, chunk) in streamed.chunks(MAX_BATCH).enumerate() {
        let body = json!({ "batch_seq": seq as u64 + 1, "events": wire(chunk) });
        let ack: IngestAck = post_with_retry(client, &events_url, &body).await.map_err(fail)?;
        if ack.accepted != chunk.len() || !ack.rejected.is_empty() {
            return Err(fail(format!(
                "batch {} acknowledged {} of {} events, rejected {:?}",
                seq + 1,
                ack.accepted,
                chunk.len(),
                ack.rejected
            )));
        }
    }

    let submit_url = format!("{}/api/v1/sessions/{}/submit", config.url, bundle.session_token);
    let answers: Vec<Value> = script
        .answers
        .iter()
        .map(|(id, v)| json!({ "step_id": id, "value": v }))
        .collect();
    let body = json!({ "answers": answers, "events": wire(trailing), "end_ms": script.end_ms });
    let resp = client
        .post(&submit_url)
        .json(&body)
        .send()
        .await
        .map_err(|e| fail(format!("submit: {e}")))?;
    let result: SubmitResult = expect_json(resp, "submit").await.map_err(fail)?;
    if result.event_count != script.events.len() {
        return Err(fail(format!(
            "server holds {} events, {} were generated",
            result.event_count,
            script.events.len()
        )));
    }

    Ok(WorkerOutcome {
        index,
        assignment_id: assignment_id.clone(),
        response_pk: result.response_pk,
        events_generated: script.events.len(),
        events_accepted: result.event_count,
    })
}

fn wire(events: &[AuditEvent]) -> Vec<Value> {
    events.iter().map(AuditEvent::to_wire).collect()
}

/// Batches are idempotent per `batch_seq`, so transport failures are retried
/// with the same body.
async fn post_with_retry<T: serde::de::DeserializeOwned>(
    client: &reqwest::Client,
    url: &str,
    body: &Value,
) -> Result<T, String> {
    let mut last = String::new();
    for attempt in 0..SEND_ATTEMPTS {
        if attempt > 0 {
            tokio::time::sleep(Duration::from_millis(50 << attempt)).await;
        }
        match client.post(url).json(body).send().await {
            Ok(resp) => return expect_json(resp, "events").await,
            Err(e) => last = e.to_string(),
        }
    }
    Err(format!("events: {last}"))
}

async fn expect_json<T: serde::de::DeserializeOwned>(resp: reqwest::Response, what: &str) -> Result<T, String> {
    let status = resp.status();
    let text = resp.text().await.map_err(|e| format!("{what}: {e}"))?;
    if !status.is_success() {
        return Err(format!("{what}: HTTP {status}: {text}"));
    }
    serde_json::from_str(&text).map_err(|e| format!("{what}: unexpected response {text:?}: {e}"))
}
