//! Auditor events, per-session logs, task fingerprints and bot signals.

mod bot;
mod event;
mod features;
mod log;

pub use bot::{detect_bot_signals, BotFlag, BotSignalReport, BotThresholds};
pub use event::{decode_event, decode_event_with, AuditEvent, EventPayload, FocusState, RejectReason, MAX_TARGET_LEN};
pub use features::{
    clicks_count, dwell_gaps, extract_fingerprint, mouse_net_displacement, mouse_path_length, unfocused_duration,
    FingerprintVector, FINGERPRINT_FIELDS,
};
pub use log::SessionEventLog;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error("session log is not finalized")]
    NotFinalized,
    #[error("session log is already finalized")]
    AlreadyFinalized,
    #[error("session end {end_ms} ms precedes the last event at {last_ms} ms")]
    EndBeforeEvents { end_ms: u64, last_ms: u64 },
}
