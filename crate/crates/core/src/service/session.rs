use std::collections::{BTreeMap, HashSet};

use super::{
    Handshake, IngestAck, IngestRequest, Redirect, Service, ServiceError, SubmitRequest, SubmitResult, TaskBundle,
    STANDALONE_PREFIX,
};
use crate::audit::{decode_event_with, extract_fingerprint, AuditEvent, SessionEventLog};
use crate::domain::{
    decode_answer, instantiate_step_order, AnswerError, AnswerValue, StepId, StepOrder, TaskId, TaskStatus,
};
use crate::store::{Session, SessionState, StoreError, StoreTx, SubmitStage, TaskRecord};
use crate::text::is_xml_safe;

const MAX_ID_LEN: usize = 256;
const MAX_URL_LEN: usize = 2048;

fn new_token() -> String {
    format!("{:032x}", rand::random::<u128>())
}

fn check_id(name: &str, value: &str) -> Result<(), ServiceError> {
    if value.chars().count() > MAX_ID_LEN || !is_xml_safe(value) {
        return Err(ServiceError::InvalidInput(format!(
            "{name} is too long or contains control characters"
        )));
    }
    Ok(())
}

fn check_submit_url(url: &str) -> Result<(), ServiceError> {
    let ok = url.is_empty()
        || (url.len() <= MAX_URL_LEN
            && (url.starts_with("https://") || url.starts_with("http://"))
            && !url.chars().any(char::is_whitespace));
    if ok {
        Ok(())
    } else {
        Err(ServiceError::InvalidInput("turkSubmitTo must be an http(s) URL".into()))
    }
}

fn load_task(tx: &StoreTx<'_>, task_id: &TaskId) -> Result<TaskRecord, ServiceError> {
    tx.task(task_id)?
        .ok_or_else(|| ServiceError::TaskNotFound(task_id.clone()))
}

fn open_session(tx: &StoreTx<'_>, token: &str) -> Result<Session, ServiceError> {
    let session = tx.session(token)?.ok_or(ServiceError::UnknownSession)?;
    if session.state != SessionState::Open {
        return Err(ServiceError::SessionClosed);
    }
    Ok(session)
}

fn bundle(task: &TaskRecord, order: &StepOrder, token: String, preview: bool, standalone: bool) -> TaskBundle {
    let def = &task.definition;
    let steps = order
        .permutation
        .iter()
        .filter_map(|id| def.step(id).cloned())
        .collect();
    TaskBundle {
        task_id: def.task_id.clone(),
        name: def.name.clone(),
        description: def.description.clone(),
        steps,
        auditors: task.auditors.iter().map(|a| a.kind.clone()).collect(),
        auditor_scripts: task.auditors.iter().map(|a| a.client_script_ref.clone()).collect(),
        step_plugins: task.step_plugins.clone(),
        session_token: token,
        preview,
        standalone,
    }
}

impl Service {
    /// Performs the handshake. A preview request only reads; any other request
    /// opens a session whose step order is derived from its token.
    pub fn get_task_bundle(&self, task_id: &TaskId, handshake: &Handshake) -> Result<TaskBundle, ServiceError> {
        if handshake.is_preview() {
            let task = self.store.read(|tx| load_task(tx, task_id))?;
            if task.definition.status != TaskStatus::Published {
                return Err(ServiceError::TaskNotPublished);
            }
            let authored = StepOrder {
                permutation: task.definition.steps.iter().map(|s| s.step_id.clone()).collect(),
                seed: 0,
            };
            return Ok(bundle(&task, &authored, String::new(), true, false));
        }

        let worker_id = handshake.worker_id.clone().unwrap_or_default();
        let hit_id = handshake.hit_id.clone().unwrap_or_default();
        let turk_submit_to = handshake.turk_submit_to.clone().unwrap_or_default();
        check_id("workerId", &worker_id)?;
        check_id("hitId", &hit_id)?;
        check_submit_url(&turk_submit_to)?;
        let token = new_token();
        let (assignment_id, standalone) = match handshake.assignment_id.as_deref() {
            None | Some("") => (format!("{STANDALONE_PREFIX}{token}"), true),
            Some(a) => {
                check_id("assignmentId", a)?;
                (a.to_owned(), false)
            }
        };

        let started_at = self.now();
        self.store.write(|tx| {
            let task = load_task(tx, task_id)?;
            let order = instantiate_step_order(&task.definition, &token).map_err(|_| ServiceError::TaskNotPublished)?;
            tx.insert_session(&Session {
                token: token.clone(),
                task_id: task_id.clone(),
                worker_id,
                assignment_id,
                hit_id,
                turk_submit_to,
                step_order_seed: order.seed,
                started_at,
                state: SessionState::Open,
            })?;
            Ok(bundle(&task, &order, token.clone(), false, standalone))
        })
    }

    /// The order a session presents its steps in.
    pub fn session_step_order(&self, token: &str) -> Result<StepOrder, ServiceError> {
        self.store.read(|tx| {
            let session = tx.session(token)?.ok_or(ServiceError::UnknownSession)?;
            let task = load_task(tx, &session.task_id)?;
            Ok(StepOrder::replay(&task.definition, session.step_order_seed))
        })
    }

    /// Validates and appends a batch. A `batch_seq` seen before for the
    /// session returns the original acknowledgement and changes nothing.
    pub fn ingest_batch(&self, token: &str, batch: &IngestRequest) -> Result<IngestAck, ServiceError> {
        if i64::try_from(batch.batch_seq).is_err() {
            return Err(ServiceError::InvalidInput("batch_seq out of range".into()));
        }
        self.store.write(|tx| {
            let session = tx.session(token)?.ok_or(ServiceError::UnknownSession)?;
            if let Some(ack) = tx.batch_ack(token, batch.batch_seq)? {
                return Ok(ack);
            }
            if session.state != SessionState::Open {
                return Err(ServiceError::SessionClosed);
            }
            let task = load_task(tx, &session.task_id)?;
            let mut accepted = Vec::with_capacity(batch.events.len());
            let mut rejected = Vec::new();
            for (i, raw) in batch.events.iter().enumerate() {
                match decode_event_with(raw, |k| task.auditor(k)) {
                    Ok(e) => accepted.push(e),
                    Err(reason) => rejected.push((i, reason)),
                }
            }
            tx.append_events(token, &accepted)?;
            let ack = IngestAck {
                accepted: accepted.len(),
                rejected,
            };
            tx.record_batch(token, batch.batch_seq, &ack)?;
            Ok(ack)
        })
    }

    /// Persists the response in one transaction: trailing events, answers,
    /// auditor rows, fingerprint and the session state change either all land
    /// or none do.
    ///
    /// Trailing events that fail validation are dropped, as they would have
    /// been rejected had they arrived in a batch.
    pub fn submit_response(&self, token: &str, req: &SubmitRequest) -> Result<SubmitResult, ServiceError> {
        if i64::try_from(req.end_ms).is_err() {
            return Err(ServiceError::InvalidInput("end_ms out of range".into()));
        }
        let submitted_at = self.now();
        self.store.write(|tx| {
            let session = open_session(tx, token)?;
            let task = load_task(tx, &session.task_id)?;
            let answers = check_answers(&task, req)?;

            let trailing: Vec<AuditEvent> = req
                .events
                .iter()
                .filter_map(|raw| decode_event_with(raw, |k| task.auditor(k)).ok())
                .collect();
            tx.append_events(token, &trailing)?;
            self.fault(SubmitStage::EventsIngested)?;

            let mut log = SessionEventLog::new(token, task.definition.auditors.iter().cloned());
            for event in tx.events(token)? {
                log.append(event)
                    .map_err(|r| StoreError::Corrupt(format!("stored event rejected: {r}")))?;
            }
            log.finalize().map_err(|e| StoreError::Corrupt(e.to_string()))?;
            self.fault(SubmitStage::LogFinalized)?;

            let end_ms = req.end_ms.max(log.last_t_ms().unwrap_or(0));
            let fingerprint = extract_fingerprint(&log, end_ms).map_err(|e| StoreError::Corrupt(e.to_string()))?;
            let response = tx.persist_response(&session, &task, &answers, &log, &fingerprint, submitted_at, |s| {
                self.fault(s)
            })?;
            if !tx.close_session(token, SessionState::Submitted)? {
                return Err(ServiceError::SessionClosed);
            }
            self.fault(SubmitStage::SessionMarked)?;

            let pk = response.record.pk;
            let url = format!("{}/mturk/externalSubmit", session.turk_submit_to.trim_end_matches('/'));
            let fields = BTreeMap::from([
                ("assignmentId".to_string(), session.assignment_id.clone()),
                ("response_pk".to_string(), pk.to_string()),
            ]);
            Ok(SubmitResult {
                response_pk: pk,
                event_count: log.len(),
                redirect: Redirect { url, fields },
            })
        })
    }

    pub fn open_session_count(&self, task_id: &TaskId) -> Result<u64, ServiceError> {
        Ok(self.store.read(|tx| tx.count_sessions(task_id, SessionState::Open))?)
    }
}

/// Decodes answers against the task, in authored step order.
fn check_answers(task: &TaskRecord, req: &SubmitRequest) -> Result<Vec<(StepId, AnswerValue)>, ServiceError> {
    let def = &task.definition;
    let mut seen = HashSet::new();
    let mut decoded = BTreeMap::new();
    for input in &req.answers {
        let step_id = StepId::from(input.step_id.as_str());
        let Some((index, step)) = def.steps.iter().enumerate().find(|(_, s)| s.step_id == step_id) else {
            return Err(ServiceError::MalformedAnswer {
                step_id,
                reason: "no such step".into(),
            });
        };
        if !seen.insert(step_id.clone()) {
            return Err(ServiceError::DuplicateAnswer(step_id));
        }
        let plugin = task.step_plugin(step.kind.name());
        match decode_answer(step, plugin, &input.value) {
            Err(AnswerError::Malformed(reason)) => return Err(ServiceError::MalformedAnswer { step_id, reason }),
            Ok(Some(v)) if !(v.is_blank() && step.required) => {
                decoded.insert(index, (step_id, v));
            }
            Ok(_) => {}
        }
    }
    for (i, step) in def.steps.iter().enumerate() {
        if step.required && !decoded.contains_key(&i) {
            return Err(ServiceError::MissingRequiredAnswer(step.step_id.clone()));
        }
    }
    Ok(decoded.into_values().collect())
}
