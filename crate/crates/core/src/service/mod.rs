//! Session handling and admin operations over a [`Store`].
//!
//! Transport-agnostic: the HTTP server and the CLI both call into [`Service`].

mod session;
mod wire;

use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use thiserror::Error;

use crate::audit::BotThresholds;
use crate::domain::{
    close_task, create_task, publish_task, DomainError, PluginDescriptor, PluginRegistry, RegistryError, StepId,
    TaskDefinition, TaskId, TaskSpec,
};
use crate::export::{serialize_document, write_fingerprint_csv, ExportDocument};
use crate::store::{Store, StoreError, SubmitStage, TaskRecord, TaskSummary};

pub use wire::{
    AnswerInput, Handshake, IngestAck, IngestRequest, Redirect, SubmitRequest, SubmitResult, TaskBundle,
    PREVIEW_ASSIGNMENT_ID, STANDALONE_PREFIX,
};

pub const DEFAULT_SESSION_TTL_SECS: u64 = 4 * 60 * 60;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub admin_token: String,
    pub session_ttl: chrono::Duration,
    pub bot_thresholds: BotThresholds,
}

impl ServiceConfig {
    pub fn new(admin_token: impl Into<String>) -> Self {
        Self {
            admin_token: admin_token.into(),
            session_ttl: chrono::Duration::seconds(DEFAULT_SESSION_TTL_SECS as i64),
            bot_thresholds: BotThresholds::default(),
        }
    }

    /// Sessions left open longer than this are abandoned by the sweeper.
    pub fn with_session_ttl(mut self, ttl: std::time::Duration) -> Self {
        self.session_ttl = chrono::Duration::from_std(ttl).unwrap_or(chrono::Duration::MAX);
        self
    }
}

/// Decides whether a submission fails at a given stage. Used to test that
/// submissions are all-or-nothing; implementations may also panic.
pub trait FaultInjector: Send + Sync {
    fn fail_at(&self, stage: SubmitStage) -> bool;
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("missing or invalid admin token")]
    Unauthorized,
    #[error("task {0} not found")]
    TaskNotFound(TaskId),
    #[error("task is not published")]
    TaskNotPublished,
    #[error("an open or submitted session already exists for this assignment")]
    DuplicateAssignment,
    #[error("unknown session")]
    UnknownSession,
    #[error("session is no longer open")]
    SessionClosed,
    #[error("required step {0} was not answered")]
    MissingRequiredAnswer(StepId),
    #[error("answer for step {step_id} is malformed: {reason}")]
    MalformedAnswer { step_id: StepId, reason: String },
    #[error("step {0} was answered more than once")]
    DuplicateAnswer(StepId),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("submission aborted at {}", .0.as_str())]
    InjectedFault(SubmitStage),
    #[error(transparent)]
    Storage(StoreError),
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::DuplicateAssignment => ServiceError::DuplicateAssignment,
            StoreError::TaskNotFound(id) => ServiceError::TaskNotFound(id),
            other => ServiceError::Storage(other),
        }
    }
}

impl ServiceError {
    /// Stable machine-readable name, used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Unauthorized => "unauthorized",
            ServiceError::TaskNotFound(_) => "task_not_found",
            ServiceError::TaskNotPublished => "task_not_published",
            ServiceError::DuplicateAssignment => "duplicate_assignment",
            ServiceError::UnknownSession => "unknown_session",
            ServiceError::SessionClosed => "session_closed",
            ServiceError::MissingRequiredAnswer(_) => "missing_required_answer",
            ServiceError::MalformedAnswer { .. } => "malformed_answer",
            ServiceError::DuplicateAnswer(_) => "duplicate_answer",
            ServiceError::InvalidInput(_) => "invalid_input",
            ServiceError::Domain(DomainError::IllegalTransition { .. }) => "illegal_transition",
            ServiceError::Domain(DomainError::TaskNotPublished) => "task_not_published",
            ServiceError::Domain(_) => "invalid_task",
            ServiceError::Registry(_) => "invalid_plugin",
            ServiceError::InjectedFault(_) => "injected_fault",
            ServiceError::Storage(_) => "storage_failure",
        }
    }
}

type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub struct Service {
    store: Store,
    registry: RwLock<PluginRegistry>,
    config: ServiceConfig,
    faults: Option<Arc<dyn FaultInjector>>,
    clock: Clock,
}

impl Service {
    /// An empty admin token disables the admin operations that require
    /// [`Service::authorize`]; direct callers such as the CLI are unaffected.
    pub fn new(store: Store, registry: PluginRegistry, config: ServiceConfig) -> Self {
        Self {
            store,
            registry: RwLock::new(registry),
            config,
            faults: None,
            clock: Arc::new(Utc::now),
        }
    }

    pub fn with_fault_injector(mut self, faults: Arc<dyn FaultInjector>) -> Self {
        self.faults = Some(faults);
        self
    }

    pub fn with_clock(mut self, clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    fn fault(&self, stage: SubmitStage) -> Result<(), ServiceError> {
        match &self.faults {
            Some(f) if f.fail_at(stage) => Err(ServiceError::InjectedFault(stage)),
            _ => Ok(()),
        }
    }

    /// Checks an `Authorization` header value of the form `Bearer <token>`.
    pub fn authorize(&self, header: Option<&str>) -> Result<(), ServiceError> {
        let presented = header.and_then(|h| h.strip_prefix("Bearer ")).map(str::trim);
        match presented {
            Some(t)
                if !self.config.admin_token.is_empty()
                    && constant_time_eq(t.as_bytes(), self.config.admin_token.as_bytes()) =>
            {
                Ok(())
            }
            _ => Err(ServiceError::Unauthorized),
        }
    }

    // Plugins.

    pub fn register_plugin(&self, descriptor: PluginDescriptor) -> Result<(), ServiceError> {
        Ok(self.registry.write().register(descriptor)?)
    }

    pub fn registry(&self) -> parking_lot::RwLockReadGuard<'_, PluginRegistry> {
        self.registry.read()
    }

    // Tasks.

    pub fn create_task(&self, spec: TaskSpec) -> Result<TaskDefinition, ServiceError> {
        let record = {
            let registry = self.registry.read();
            let def = create_task(spec, &registry, self.now())?;
            TaskRecord::snapshot(def, &registry)
        };
        self.store.write(|tx| tx.insert_task(&record))?;
        Ok(record.definition)
    }

    pub fn task(&self, task_id: &TaskId) -> Result<TaskRecord, ServiceError> {
        self.store
            .read(|tx| tx.task(task_id))?
            .ok_or_else(|| ServiceError::TaskNotFound(task_id.clone()))
    }

    pub fn list_tasks(&self) -> Result<Vec<TaskSummary>, ServiceError> {
        Ok(self.store.read(|tx| tx.list_tasks())?)
    }

    pub fn publish_task(&self, task_id: &TaskId) -> Result<TaskDefinition, ServiceError> {
        self.transition(task_id, publish_task)
    }

    pub fn close_task(&self, task_id: &TaskId) -> Result<TaskDefinition, ServiceError> {
        self.transition(task_id, close_task)
    }

    fn transition(
        &self,
        task_id: &TaskId,
        f: fn(TaskDefinition) -> Result<TaskDefinition, DomainError>,
    ) -> Result<TaskDefinition, ServiceError> {
        self.store.write(|tx| {
            let mut record = tx
                .task(task_id)?
                .ok_or_else(|| ServiceError::TaskNotFound(task_id.clone()))?;
            record.definition = f(record.definition)?;
            tx.update_task(&record)?;
            Ok(record.definition)
        })
    }

    // Export.

    pub fn export_document(&self, task_id: &TaskId) -> Result<ExportDocument, ServiceError> {
        Ok(self.store.export_document(task_id)?)
    }

    pub fn export_xml(&self, task_id: &TaskId) -> Result<String, ServiceError> {
        Ok(serialize_document(&self.export_document(task_id)?))
    }

    pub fn fingerprints_csv(&self, task_id: &TaskId) -> Result<Vec<u8>, ServiceError> {
        let doc = self.export_document(task_id)?;
        let mut out = Vec::new();
        write_fingerprint_csv(&doc, &mut out).map_err(|e| ServiceError::Storage(StoreError::Corrupt(e.to_string())))?;
        Ok(out)
    }

    /// Abandons open sessions started more than `ttl` before `now`.
    pub fn abandon_stale_sessions(&self, now: DateTime<Utc>, ttl: chrono::Duration) -> Result<usize, ServiceError> {
        Ok(self.store.write(|tx| tx.abandon_started_before(now - ttl))?)
    }

    /// [`Service::abandon_stale_sessions`] with the configured TTL and clock.
    pub fn abandon_expired(&self) -> Result<usize, ServiceError> {
        self.abandon_stale_sessions(self.now(), self.config.session_ttl)
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}
