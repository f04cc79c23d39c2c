use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use super::event::{decode_event, AuditEvent, RejectReason};
use super::AuditError;
use crate::domain::PluginRegistry;

/// Events captured for one session, grouped by auditor kind.
///
/// Events are kept in arrival order until [`finalize`](Self::finalize), which
/// stably sorts every per-kind list by timestamp and freezes the log.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionEventLog {
    session_token: String,
    events: BTreeMap<String, Vec<AuditEvent>>,
    finalized: bool,
}

impl SessionEventLog {
    /// A log accepting the given auditor kinds.
    pub fn new<I, S>(session_token: &str, auditors: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            session_token: session_token.to_owned(),
            events: auditors.into_iter().map(|k| (k.into(), Vec::new())).collect(),
            finalized: false,
        }
    }

    pub fn session_token(&self) -> &str {
        &self.session_token
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    pub fn enabled_kinds(&self) -> BTreeSet<String> {
        self.events.keys().cloned().collect()
    }

    /// Decodes and validates a wire event, appending it when accepted.
    pub fn validate_event(&mut self, raw: &Value, registry: &PluginRegistry) -> Result<(), RejectReason> {
        if self.finalized {
            return Err(RejectReason::SessionFinalized);
        }
        let event = decode_event(raw, registry, &self.enabled_kinds())?;
        self.append(event)
    }

    /// Appends an already decoded event.
    pub fn append(&mut self, event: AuditEvent) -> Result<(), RejectReason> {
        if self.finalized {
            return Err(RejectReason::SessionFinalized);
        }
        let list = self.events.get_mut(&event.kind).ok_or(RejectReason::UnknownKind)?;
        list.push(event);
        Ok(())
    }

    pub fn finalize(&mut self) -> Result<(), AuditError> {
        if self.finalized {
            return Err(AuditError::AlreadyFinalized);
        }
        for list in self.events.values_mut() {
            list.sort_by_key(|e| e.t_ms);
        }
        self.finalized = true;
        Ok(())
    }

    pub fn events(&self, kind: &str) -> &[AuditEvent] {
        self.events.get(kind).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter_kinds(&self) -> impl Iterator<Item = (&str, &[AuditEvent])> {
        self.events.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.events.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last_t_ms(&self) -> Option<u64> {
        self.events.values().flatten().map(|e| e.t_ms).max()
    }

    /// Timestamps of every event of every kind, ascending.
    pub fn merged_timestamps(&self) -> Vec<u64> {
        let mut all: Vec<u64> = self.events.values().flatten().map(|e| e.t_ms).collect();
        all.sort_unstable();
        all
    }

    pub(crate) fn require_finalized(&self) -> Result<(), AuditError> {
        if self.finalized {
            Ok(())
        } else {
            Err(AuditError::NotFinalized)
        }
    }
}
