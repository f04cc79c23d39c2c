use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rusqlite::{params, Connection, ErrorCode, OptionalExtension, Row};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::{Session, SessionState, StoreError, TaskRecord, TaskSummary};
use crate::audit::{AuditEvent, EventPayload, FingerprintVector, SessionEventLog};
use crate::domain::{Aggregation, AnswerValue, AuditorDescriptor, Scalar, StepId, StepKind, TaskId};
use crate::export::{
    AuditorRow, AuditorSchema, ExportDocument, ExportedResponse, ExportedStep, ExportedTask, ResponseRecord,
    StepAnswerRow, EXPORT_VERSION, RESPONSE_MODEL, STEP_ANSWER_MODEL,
};

/// Points inside a submission at which a fault can be injected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubmitStage {
    EventsIngested,
    LogFinalized,
    ResponseInserted,
    AnswersInserted,
    AuditorRowsInserted,
    FingerprintInserted,
    SessionMarked,
}

impl SubmitStage {
    pub const ALL: [SubmitStage; 7] = [
        SubmitStage::EventsIngested,
        SubmitStage::LogFinalized,
        SubmitStage::ResponseInserted,
        SubmitStage::AnswersInserted,
        SubmitStage::AuditorRowsInserted,
        SubmitStage::FingerprintInserted,
        SubmitStage::SessionMarked,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SubmitStage::EventsIngested => "events_ingested",
            SubmitStage::LogFinalized => "log_finalized",
            SubmitStage::ResponseInserted => "response_inserted",
            SubmitStage::AnswersInserted => "answers_inserted",
            SubmitStage::AuditorRowsInserted => "auditor_rows_inserted",
            SubmitStage::FingerprintInserted => "fingerprint_inserted",
            SubmitStage::SessionMarked => "session_marked",
        }
    }
}

/// Typed access to the tables inside one transaction.
pub struct StoreTx<'a> {
    conn: &'a Connection,
}

fn ms(t: DateTime<Utc>) -> i64 {
    t.timestamp_millis()
}

fn from_ms(v: i64) -> Result<DateTime<Utc>, StoreError> {
    DateTime::from_timestamp_millis(v).ok_or_else(|| StoreError::Corrupt(format!("timestamp {v}")))
}

fn to_i64(v: u64, what: &str) -> Result<i64, StoreError> {
    i64::try_from(v).map_err(|_| StoreError::Corrupt(format!("{what} {v} exceeds the storable range")))
}

fn to_u64(v: i64, what: &str) -> Result<u64, StoreError> {
    u64::try_from(v).map_err(|_| StoreError::Corrupt(format!("negative {what} {v}")))
}

fn is_unique_violation(e: &rusqlite::Error) -> bool {
    matches!(e, rusqlite::Error::SqliteFailure(f, _) if f.code == ErrorCode::ConstraintViolation)
}

impl<'a> StoreTx<'a> {
    pub(super) fn new(conn: &'a Connection) -> Self {
        Self { conn }
    }

    // Primary keys.

    /// Next pk in the per-label sequence; 1 for a fresh label.
    pub fn allocate_pk(&self, model: &str) -> Result<i64, StoreError> {
        self.allocate_pks(model, 1)
    }

    /// Reserves `n` consecutive pks and returns the first.
    pub fn allocate_pks(&self, model: &str, n: usize) -> Result<i64, StoreError> {
        let n = n as i64;
        let last: i64 = self.conn.query_row(
            "INSERT INTO pk_sequences(model, last_pk) VALUES (?1, ?2)
             ON CONFLICT(model) DO UPDATE SET last_pk = last_pk + ?2
             RETURNING last_pk",
            params![model, n],
            |r| r.get(0),
        )?;
        Ok(last - n + 1)
    }

    // Tasks.

    pub fn insert_task(&self, record: &TaskRecord) -> Result<(), StoreError> {
        self.conn.execute(
            "INSERT INTO tasks(task_id, record) VALUES (?1, ?2)",
            params![record.definition.task_id.as_str(), serde_json::to_string(record)?],
        )?;
        Ok(())
    }

    pub fn update_task(&self, record: &TaskRecord) -> Result<(), StoreError> {
        let n = self.conn.execute(
            "UPDATE tasks SET record = ?2 WHERE task_id = ?1",
            params![record.definition.task_id.as_str(), serde_json::to_string(record)?],
        )?;
        if n == 0 {
            return Err(StoreError::TaskNotFound(record.definition.task_id.clone()));
        }
        Ok(())
    }

    pub fn task(&self, task_id: &TaskId) -> Result<Option<TaskRecord>, StoreError> {
        let raw: Option<String> = self
            .conn
            .prepare_cached("SELECT record FROM tasks WHERE task_id = ?1")?
            .query_row([task_id.as_str()], |r| r.get(0))
            .optional()?;
        Ok(raw.map(|s| serde_json::from_str(&s)).transpose()?)
    }

    /// All tasks in creation order.
    pub fn list_tasks(&self) -> Result<Vec<TaskSummary>, StoreError> {
        let mut stmt = self.conn.prepare(
            "SELECT t.record, (SELECT COUNT(*) FROM responses r WHERE r.task_id = t.task_id)
             FROM tasks t ORDER BY t.seq",
        )?;
        let rows = stmt.query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, i64>(1)?)))?;
        let mut out = Vec::new();
        for row in rows {
            let (raw, count) = row?;
            let record: TaskRecord = serde_json::from_str(&raw)?;
            out.push(TaskSummary {
                task_id: record.definition.task_id,
                name: record.definition.name,
                status: record.definition.status,
                response_count: to_u64(count, "count")?,
            });
        }
        Ok(out)
    }

    // Sessions.

    /// Fails with [`StoreError::DuplicateAssignment`] while another open or
    /// submitted session holds the same (task, assignment) pair.
    pub fn insert_session(&self, s: &Session) -> Result<(), StoreError> {
        let result = self.conn.execute(
            "INSERT INTO sessions(token, task_id, worker_id, assignment_id, hit_id, turk_submit_to,
                                  seed, started_at, state)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)",
            params![
                s.token,
                s.task_id.as_str(),
                s.worker_id,
                s.assignment_id,
                s.hit_id,
                s.turk_submit_to,
                s.step_order_seed as i64,
                ms(s.started_at),
                s.state.as_str()
            ],
        );
        match result {
            Ok(_) => Ok(()),
            Err(e) if is_unique_violation(&e) && self.session(&s.token)?.is_none() => {
                Err(StoreError::DuplicateAssignment)
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn session(&self, token: &str) -> Result<Option<Session>, StoreError> {
        let row = self
            .conn
            .prepare_cached(
                "SELECT token, task_id, worker_id, assignment_id, hit_id, turk_submit_to, seed,
                        started_at, state
                 FROM sessions WHERE token = ?1",
            )?
            .query_row([token], |r| {
                Ok((
                    r.get::<_, String>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, String>(2)?,
                    r.get::<_, String>(3)?,
                    r.get::<_, String>(4)?,
                    r.get::<_, String>(5)?,
                    r.get::<_, i64>(6)?,
                    r.get::<_, i64>(7)?,
                    r.get::<_, String>(8)?,
                ))
            })
            .optional()?;
        let Some((token, task_id, worker_id, assignment_id, hit_id, turk_submit_to, seed, started, state)) = row else {
            return Ok(None);
        };
        Ok(Some(Session {
            token,
            task_id: task_id.into(),
            worker_id,
            assignment_id,
            hit_id,
            turk_submit_to,
            step_order_seed: seed as u64,
            started_at: from_ms(started)?,
            state: SessionState::parse(&state)
                .ok_or_else(|| StoreError::Corrupt(format!("session state {state:?}")))?,
        }))
    }

    /// Moves an open session to `state`; returns false if it was not open.
    pub fn close_session(&self, token: &str, state: SessionState) -> Result<bool, StoreError> {
        let n = self.conn.execute(
            "UPDATE sessions SET state = ?2 WHERE token = ?1 AND state = 'open'",
            params![token, state.as_str()],
        )?;
        Ok(n == 1)
    }

    /// Abandons every open session started strictly before `cutoff`.
    pub fn abandon_started_before(&self, cutoff: DateTime<Utc>) -> Result<usize, StoreError> {
        Ok(self.conn.execute(
            "UPDATE sessions SET state = 'abandoned' WHERE state = 'open' AND started_at < ?1",
            [ms(cutoff)],
        )?)
    }

    pub fn count_sessions(&self, task_id: &TaskId, state: SessionState) -> Result<u64, StoreError> {
        let n: i64 = self.conn.query_row(
            "SELECT COUNT(*) FROM sessions WHERE task_id = ?1 AND state = ?2",
            params![task_id.as_str(), state.as_str()],
            |r| r.get(0),
        )?;
        to_u64(n, "count")
    }

    // Event batches.

    /// The stored acknowledgement of an already applied batch.
    pub fn batch_ack<T: DeserializeOwned>(&self, token: &str, seq: u64) -> Result<Option<T>, StoreError> {
        let raw: Option<String> = self
            .conn
            .prepare_cached("SELECT ack FROM batches WHERE token = ?1 AND batch_seq = ?2")?
            .query_row(params![token, to_i64(seq, "batch_seq")?], |r| r.get(0))
            .optional()?;
        Ok(raw.map(|s| serde_json::from_str(&s)).transpose()?)
    }

    pub fn record_batch<T: Serialize>(&self, token: &str, seq: u64, ack: &T) -> Result<(), StoreError> {
        self.conn
            .prepare_cached("INSERT INTO batches(token, batch_seq, ack) VALUES (?1, ?2, ?3)")?
            .execute(params![token, to_i64(seq, "batch_seq")?, serde_json::to_string(ack)?])?;
        Ok(())
    }

    pub fn append_events(&self, token: &str, events: &[AuditEvent]) -> Result<(), StoreError> {
        let mut stmt = self
            .conn
            .prepare_cached("INSERT INTO events(token, kind, t_ms, payload) VALUES (?1, ?2, ?3, ?4)")?;
        for e in events {
            stmt.execute(params![
                token,
                e.kind,
                to_i64(e.t_ms, "t_ms")?,
                serde_json::to_string(&e.payload)?
            ])?;
        }
        Ok(())
    }

    /// A session's stored events in arrival order.
    pub fn events(&self, token: &str) -> Result<Vec<AuditEvent>, StoreError> {
        let mut stmt = self
            .conn
            .prepare_cached("SELECT kind, t_ms, payload FROM events WHERE token = ?1 ORDER BY id")?;
        let rows = stmt.query_map([token], |r| {
            Ok((r.get::<_, String>(0)?, r.get::<_, i64>(1)?, r.get::<_, String>(2)?))
        })?;
        let mut out = Vec::new();
        for row in rows {
            let (kind, t_ms, payload) = row?;
            let payload: EventPayload = serde_json::from_str(&payload)?;
            out.push(AuditEvent {
                kind,
                t_ms: to_u64(t_ms, "t_ms")?,
                payload,
            });
        }
        Ok(out)
    }

    pub fn event_count(&self, token: &str) -> Result<u64, StoreError> {
        let n: i64 = self
            .conn
            .query_row("SELECT COUNT(*) FROM events WHERE token = ?1", [token], |r| r.get(0))?;
        to_u64(n, "count")
    }

    // Responses.

    /// Writes the response, its answers, one auditor row set per configured
    /// auditor and the fingerprint. `hook` runs after each of those sub-steps.
    ///
    /// Counter auditors yield a single row holding the event count; event-list
    /// auditors yield one row per event in finalized order.
    #[allow(clippy::too_many_arguments)]
    pub fn persist_response<E: From<StoreError>>(
        &self,
        session: &Session,
        task: &TaskRecord,
        answers: &[(StepId, AnswerValue)],
        log: &SessionEventLog,
        fingerprint: &FingerprintVector,
        submitted_at: DateTime<Utc>,
        mut hook: impl FnMut(SubmitStage) -> Result<(), E>,
    ) -> Result<ExportedResponse, E> {
        if !log.is_finalized() {
            return Err(StoreError::Corrupt("event log is not finalized".into()).into());
        }
        let pk = self.allocate_pk(RESPONSE_MODEL)?;
        self.conn
            .execute(
                "INSERT INTO responses(pk, token, task_id, worker_id, assignment_id, hit_id, seed,
                                       submitted_at)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
                params![
                    pk,
                    session.token,
                    session.task_id.as_str(),
                    session.worker_id,
                    session.assignment_id,
                    session.hit_id,
                    session.step_order_seed as i64,
                    ms(submitted_at)
                ],
            )
            .map_err(StoreError::from)?;
        hook(SubmitStage::ResponseInserted)?;

        let mut answer_rows = Vec::with_capacity(answers.len());
        if !answers.is_empty() {
            let first = self.allocate_pks(STEP_ANSWER_MODEL, answers.len())?;
            let mut stmt = self
                .conn
                .prepare_cached("INSERT INTO step_answers(pk, general_model, step_id, value) VALUES (?1, ?2, ?3, ?4)")
                .map_err(StoreError::from)?;
            for (i, (step_id, value)) in answers.iter().enumerate() {
                let row = StepAnswerRow {
                    pk: first + i as i64,
                    general_model: pk,
                    step_id: step_id.clone(),
                    value: value.clone(),
                };
                let json = serde_json::to_string(&row.value).map_err(StoreError::from)?;
                stmt.execute(params![row.pk, pk, row.step_id.as_str(), json])
                    .map_err(StoreError::from)?;
                answer_rows.push(row);
            }
        }
        hook(SubmitStage::AnswersInserted)?;

        let mut auditors = BTreeMap::new();
        for desc in &task.auditors {
            let rows = self.insert_auditor_rows(pk, desc, log.events(&desc.kind))?;
            auditors.insert(desc.kind.clone(), rows);
        }
        hook(SubmitStage::AuditorRowsInserted)?;

        self.insert_fingerprint(pk, fingerprint)?;
        hook(SubmitStage::FingerprintInserted)?;

        Ok(ExportedResponse {
            record: ResponseRecord {
                pk,
                task_id: session.task_id.clone(),
                worker_id: session.worker_id.clone(),
                assignment_id: session.assignment_id.clone(),
                hit_id: session.hit_id.clone(),
                step_order_seed: session.step_order_seed,
                answers: answer_rows,
                submitted_at,
                fingerprint: fingerprint.clone(),
            },
            auditors,
        })
    }

    fn insert_auditor_rows(
        &self,
        general_model: i64,
        desc: &AuditorDescriptor,
        events: &[AuditEvent],
    ) -> Result<Vec<AuditorRow>, StoreError> {
        let field_rows: Vec<Vec<(String, Scalar)>> = match desc.aggregation {
            Aggregation::Counter => {
                let name = desc.field_schema[0].name.clone();
                vec![vec![(name, Scalar::Integer(events.len() as i64))]]
            }
            Aggregation::EventList => events
                .iter()
                .map(|e| {
                    desc.field_schema
                        .iter()
                        .map(|f| match e.field_value(&f.name) {
                            Some(v) if v.scalar_type() == f.ty => Ok((f.name.clone(), v)),
                            _ => Err(StoreError::Corrupt(format!(
                                "{} event lacks a {} field {:?}",
                                desc.kind,
                                f.ty.as_str(),
                                f.name
                            ))),
                        })
                        .collect()
                })
                .collect::<Result<_, _>>()?,
        };
        if field_rows.is_empty() {
            return Ok(Vec::new());
        }
        let first = self.allocate_pks(&desc.model_label, field_rows.len())?;
        let mut stmt = self.conn.prepare_cached(
            "INSERT INTO auditor_rows(model, pk, general_model, kind, fields) VALUES (?1, ?2, ?3, ?4, ?5)",
        )?;
        let mut out = Vec::with_capacity(field_rows.len());
        for (i, fields) in field_rows.into_iter().enumerate() {
            let pk = first + i as i64;
            let values: Vec<Value> = fields.iter().map(|(_, v)| v.to_json()).collect();
            stmt.execute(params![
                desc.model_label,
                pk,
                general_model,
                desc.kind,
                Value::Array(values).to_string()
            ])?;
            out.push(AuditorRow {
                model: desc.model_label.clone(),
                pk,
                general_model,
                fields,
            });
        }
        Ok(out)
    }

    fn insert_fingerprint(&self, general_model: i64, fp: &FingerprintVector) -> Result<(), StoreError> {
        self.conn
            .prepare_cached(
                "INSERT INTO fingerprints(general_model, total_time_ms, clicks_count, keypress_count,
                resize_count, mouse_sample_count, mouse_path_px, mouse_net_displacement_px,
                focus_loss_count, unfocused_ms, dwell_mean_ms, dwell_median_ms, dwell_max_ms)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13)",
            )?
            .execute(params![
                general_model,
                to_i64(fp.total_time_ms, "total_time_ms")?,
                to_i64(fp.clicks_count, "clicks_count")?,
                to_i64(fp.keypress_count, "keypress_count")?,
                to_i64(fp.resize_count, "resize_count")?,
                to_i64(fp.mouse_sample_count, "mouse_sample_count")?,
                fp.mouse_path_px,
                fp.mouse_net_displacement_px,
                to_i64(fp.focus_loss_count, "focus_loss_count")?,
                to_i64(fp.unfocused_ms, "unfocused_ms")?,
                fp.dwell_mean_ms,
                fp.dwell_median_ms,
                to_i64(fp.dwell_max_ms, "dwell_max_ms")?,
            ])?;
        Ok(())
    }

    pub fn fingerprint(&self, general_model: i64) -> Result<Option<FingerprintVector>, StoreError> {
        self.conn
            .prepare_cached(
                "SELECT total_time_ms, clicks_count, keypress_count, resize_count, mouse_sample_count,
                        mouse_path_px, mouse_net_displacement_px, focus_loss_count, unfocused_ms,
                        dwell_mean_ms, dwell_median_ms, dwell_max_ms
                 FROM fingerprints WHERE general_model = ?1",
            )?
            .query([general_model])?
            .next()?
            .map(fingerprint_from_row)
            .transpose()
    }

    /// Assembles the export of one task. Only submitted sessions have
    /// responses, so abandoned and open sessions never appear.
    pub fn export_document(&self, task_id: &TaskId) -> Result<ExportDocument, StoreError> {
        let record = self
            .task(task_id)?
            .ok_or_else(|| StoreError::TaskNotFound(task_id.clone()))?;
        let def = &record.definition;
        let steps = def
            .steps
            .iter()
            .map(|s| ExportedStep {
                definition: s.clone(),
                answer_schema: match &s.kind {
                    StepKind::Custom(kind) => Some(
                        record
                            .step_plugin(kind)
                            .map(|p| p.answer_schema.clone())
                            .unwrap_or_default(),
                    ),
                    _ => None,
                },
            })
            .collect();
        let task = ExportedTask {
            task_id: def.task_id.clone(),
            name: def.name.clone(),
            description: def.description.clone(),
            ordering_mode: def.ordering_mode,
            status: def.status,
            created_at: def.created_at,
            steps,
            auditors: record.auditors.iter().map(AuditorSchema::from).collect(),
        };

        let mut stmt = self.conn.prepare_cached(
            "SELECT pk, worker_id, assignment_id, hit_id, seed, submitted_at
             FROM responses WHERE task_id = ?1 ORDER BY pk",
        )?;
        let heads = stmt
            .query_map([task_id.as_str()], |r| {
                Ok((
                    r.get::<_, i64>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, String>(2)?,
                    r.get::<_, String>(3)?,
                    r.get::<_, i64>(4)?,
                    r.get::<_, i64>(5)?,
                ))
            })?
            .collect::<Result<Vec<_>, _>>()?;

        let mut responses = Vec::with_capacity(heads.len());
        for (pk, worker_id, assignment_id, hit_id, seed, submitted_at) in heads {
            let fingerprint = self
                .fingerprint(pk)?
                .ok_or_else(|| StoreError::Corrupt(format!("response {pk} has no fingerprint")))?;
            responses.push(ExportedResponse {
                record: ResponseRecord {
                    pk,
                    task_id: task_id.clone(),
                    worker_id,
                    assignment_id,
                    hit_id,
                    step_order_seed: seed as u64,
                    answers: self.step_answers(pk)?,
                    submitted_at: from_ms(submitted_at)?,
                    fingerprint,
                },
                auditors: self.auditor_rows(pk, &record)?,
            });
        }
        Ok(ExportDocument {
            version: EXPORT_VERSION,
            task,
            responses,
        })
    }

    fn step_answers(&self, general_model: i64) -> Result<Vec<StepAnswerRow>, StoreError> {
        let mut stmt = self
            .conn
            .prepare_cached("SELECT pk, step_id, value FROM step_answers WHERE general_model = ?1 ORDER BY pk")?;
        let rows = stmt.query_map([general_model], |r| {
            Ok((r.get::<_, i64>(0)?, r.get::<_, String>(1)?, r.get::<_, String>(2)?))
        })?;
        let mut out = Vec::new();
        for row in rows {
            let (pk, step_id, value) = row?;
            out.push(StepAnswerRow {
                pk,
                general_model,
                step_id: step_id.into(),
                value: serde_json::from_str(&value)?,
            });
        }
        Ok(out)
    }

    fn auditor_rows(
        &self,
        general_model: i64,
        task: &TaskRecord,
    ) -> Result<BTreeMap<String, Vec<AuditorRow>>, StoreError> {
        let mut out: BTreeMap<String, Vec<AuditorRow>> =
            task.auditors.iter().map(|a| (a.kind.clone(), Vec::new())).collect();
        let mut stmt = self.conn.prepare_cached(
            "SELECT kind, model, pk, fields FROM auditor_rows WHERE general_model = ?1 ORDER BY kind, pk",
        )?;
        let rows = stmt.query_map([general_model], |r| {
            Ok((
                r.get::<_, String>(0)?,
                r.get::<_, String>(1)?,
                r.get::<_, i64>(2)?,
                r.get::<_, String>(3)?,
            ))
        })?;
        for row in rows {
            let (kind, model, pk, raw) = row?;
            let desc = task
                .auditor(&kind)
                .ok_or_else(|| StoreError::Corrupt(format!("row {model}/{pk} has unconfigured kind {kind}")))?;
            let values: Vec<Value> = serde_json::from_str(&raw)?;
            if values.len() != desc.field_schema.len() {
                return Err(StoreError::Corrupt(format!(
                    "row {model}/{pk} has {} fields",
                    values.len()
                )));
            }
            let fields = desc
                .field_schema
                .iter()
                .zip(&values)
                .map(|(f, v)| {
                    f.ty.from_json(v)
                        .map(|s| (f.name.clone(), s))
                        .ok_or_else(|| StoreError::Corrupt(format!("row {model}/{pk} field {}", f.name)))
                })
                .collect::<Result<_, _>>()?;
            out.entry(kind).or_default().push(AuditorRow {
                model,
                pk,
                general_model,
                fields,
            });
        }
        Ok(out)
    }
}

fn fingerprint_from_row(r: &Row<'_>) -> Result<FingerprintVector, StoreError> {
    let int = |i: usize| -> Result<u64, StoreError> { to_u64(r.get::<_, i64>(i)?, "fingerprint field") };
    Ok(FingerprintVector {
        total_time_ms: int(0)?,
        clicks_count: int(1)?,
        keypress_count: int(2)?,
        resize_count: int(3)?,
        mouse_sample_count: int(4)?,
        mouse_path_px: r.get(5)?,
        mouse_net_displacement_px: r.get(6)?,
        focus_loss_count: int(7)?,
        unfocused_ms: int(8)?,
        dwell_mean_ms: r.get(9)?,
        dwell_median_ms: r.get(10)?,
        dwell_max_ms: int(11)?,
    })
}
