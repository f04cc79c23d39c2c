//! Core of the turkey crowdsourcing service.
//!
//! A [`TaskDefinition`] bundles ordered steps (the questions a worker answers)
//! with a set of auditors (browser-side recorders of worker behavior). Workers
//! reach a task through an external-HIT handshake, stream [`AuditEvent`]s while
//! they work, and submit answers. Each submission is persisted as a response
//! with per-auditor data rows and a behavioral [`FingerprintVector`], and the
//! whole task can be exported as XML.
//!
//! The [`service::Service`] type ties the pieces together and is what the HTTP
//! layer and CLI drive.

pub mod audit;
pub mod domain;
pub mod export;
pub mod service;
pub mod store;
pub mod text;

pub use audit::{
    detect_bot_signals, extract_fingerprint, AuditEvent, BotFlag, BotSignalReport, BotThresholds, EventPayload,
    FingerprintVector, FocusState, RejectReason, SessionEventLog,
};
pub use domain::{
    create_task, instantiate_step_order, validate_step, Aggregation, AuditorDescriptor, FieldSpec, OrderingMode,
    PluginDescriptor, PluginRegistry, Scalar, ScalarType, StepDefinition, StepId, StepKind, StepOrder,
    StepPluginDescriptor, TaskDefinition, TaskId, TaskSpec, TaskStatus,
};
pub use export::{parse_export, serialize_document, AuditorRow, ExportDocument, ResponseRecord};
pub use service::{
    Handshake, IngestAck, IngestRequest, Service, ServiceConfig, ServiceError, SubmitRequest, SubmitResult, TaskBundle,
};
pub use store::{Store, StoreError};
