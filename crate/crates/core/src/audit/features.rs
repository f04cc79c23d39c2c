//! Task fingerprint features.
//!
//! Dwell gaps are the differences between consecutive timestamps of the merged,
//! sorted stream of every event kind. Focus tracking starts in the focused
//! state; only a blur while focused or a focus while blurred changes it.

use serde::{Deserialize, Serialize};

use super::event::{EventPayload, FocusState};
use super::log::SessionEventLog;
use super::AuditError;
use crate::domain::Scalar;

/// Column order of the fingerprint in CSV and XML.
pub const FINGERPRINT_FIELDS: [&str; 12] = [
    "total_time_ms",
    "clicks_count",
    "keypress_count",
    "resize_count",
    "mouse_sample_count",
    "mouse_path_px",
    "mouse_net_displacement_px",
    "focus_loss_count",
    "unfocused_ms",
    "dwell_mean_ms",
    "dwell_median_ms",
    "dwell_max_ms",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FingerprintVector {
    pub total_time_ms: u64,
    pub clicks_count: u64,
    pub keypress_count: u64,
    pub resize_count: u64,
    pub mouse_sample_count: u64,
    /// Sum of distances between consecutive mouse samples.
    pub mouse_path_px: f64,
    /// Distance from the first to the last mouse sample.
    pub mouse_net_displacement_px: f64,
    /// Number of blur events.
    pub focus_loss_count: u64,
    pub unfocused_ms: u64,
    pub dwell_mean_ms: f64,
    /// Lower middle element for an even number of gaps.
    pub dwell_median_ms: f64,
    pub dwell_max_ms: u64,
}

impl FingerprintVector {
    /// Field values in [`FINGERPRINT_FIELDS`] order.
    pub fn to_scalars(&self) -> [Scalar; 12] {
        let int = |v: u64| Scalar::Integer(v as i64);
        [
            int(self.total_time_ms),
            int(self.clicks_count),
            int(self.keypress_count),
            int(self.resize_count),
            int(self.mouse_sample_count),
            Scalar::Float(self.mouse_path_px),
            Scalar::Float(self.mouse_net_displacement_px),
            int(self.focus_loss_count),
            int(self.unfocused_ms),
            Scalar::Float(self.dwell_mean_ms),
            Scalar::Float(self.dwell_median_ms),
            int(self.dwell_max_ms),
        ]
    }

    /// Inverse of [`to_scalars`](Self::to_scalars); `None` on a type or sign mismatch.
    pub fn from_scalars(values: &[Scalar]) -> Option<Self> {
        let int = |i: usize| match values.get(i)? {
            Scalar::Integer(v) => u64::try_from(*v).ok(),
            _ => None,
        };
        let float = |i: usize| match values.get(i)? {
            Scalar::Float(v) if *v >= 0.0 => Some(*v),
            _ => None,
        };
        if values.len() != FINGERPRINT_FIELDS.len() {
            return None;
        }
        Some(Self {
            total_time_ms: int(0)?,
            clicks_count: int(1)?,
            keypress_count: int(2)?,
            resize_count: int(3)?,
            mouse_sample_count: int(4)?,
            mouse_path_px: float(5)?,
            mouse_net_displacement_px: float(6)?,
            focus_loss_count: int(7)?,
            unfocused_ms: int(8)?,
            dwell_mean_ms: float(9)?,
            dwell_median_ms: float(10)?,
            dwell_max_ms: int(11)?,
        })
    }

    /// Events visible through the counters: clicks, keypresses, resizes,
    /// mouse samples and blurs.
    pub fn counted_events(&self) -> u64 {
        self.clicks_count + self.keypress_count + self.resize_count + self.mouse_sample_count + self.focus_loss_count
    }
}

pub fn clicks_count(log: &SessionEventLog) -> Result<u64, AuditError> {
    log.require_finalized()?;
    Ok(log.events("clicks_total").len() as u64)
}

fn mouse_points(log: &SessionEventLog) -> impl Iterator<Item = (f64, f64)> + '_ {
    log.events("mouse_movement").iter().filter_map(|e| match e.payload {
        EventPayload::Mouse { x_px, y_px } => Some((f64::from(x_px), f64::from(y_px))),
        _ => None,
    })
}

pub fn mouse_path_length(log: &SessionEventLog) -> Result<f64, AuditError> {
    log.require_finalized()?;
    let mut total = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for p in mouse_points(log) {
        if let Some(q) = prev {
            total += (p.0 - q.0).hypot(p.1 - q.1);
        }
        prev = Some(p);
    }
    Ok(total)
}

pub fn mouse_net_displacement(log: &SessionEventLog) -> Result<f64, AuditError> {
    log.require_finalized()?;
    let mut points = mouse_points(log);
    let Some(first) = points.next() else {
        return Ok(0.0);
    };
    let last = points.last().unwrap_or(first);
    Ok((last.0 - first.0).hypot(last.1 - first.1))
}

fn check_end(log: &SessionEventLog, session_end_ms: u64) -> Result<(), AuditError> {
    log.require_finalized()?;
    match log.last_t_ms() {
        Some(last_ms) if last_ms > session_end_ms => Err(AuditError::EndBeforeEvents {
            end_ms: session_end_ms,
            last_ms,
        }),
        _ => Ok(()),
    }
}

pub fn unfocused_duration(log: &SessionEventLog, session_end_ms: u64) -> Result<u64, AuditError> {
    check_end(log, session_end_ms)?;
    let mut blurred_since: Option<u64> = None;
    let mut total = 0;
    for e in log.events("focus_changes") {
        match (&e.payload, blurred_since) {
            (
                EventPayload::Focus {
                    state: FocusState::Blur,
                },
                None,
            ) => blurred_since = Some(e.t_ms),
            (
                EventPayload::Focus {
                    state: FocusState::Focus,
                },
                Some(start),
            ) => {
                total += e.t_ms - start;
                blurred_since = None;
            }
            _ => {}
        }
    }
    if let Some(start) = blurred_since {
        total += session_end_ms - start;
    }
    Ok(total)
}

/// Gaps between consecutive events of the merged stream.
pub fn dwell_gaps(log: &SessionEventLog) -> Vec<u64> {
    log.merged_timestamps().windows(2).map(|w| w[1] - w[0]).collect()
}

pub fn extract_fingerprint(log: &SessionEventLog, session_end_ms: u64) -> Result<FingerprintVector, AuditError> {
    check_end(log, session_end_ms)?;
    let count = |kind: &str| log.events(kind).len() as u64;
    let focus_loss_count = log
        .events("focus_changes")
        .iter()
        .filter(|e| {
            matches!(
                e.payload,
                EventPayload::Focus {
                    state: FocusState::Blur
                }
            )
        })
        .count() as u64;

    let mut gaps = dwell_gaps(log);
    let (dwell_mean_ms, dwell_median_ms, dwell_max_ms) = if gaps.is_empty() {
        (0.0, 0.0, 0)
    } else {
        let sum: u128 = gaps.iter().map(|&g| u128::from(g)).sum();
        let mean = sum as f64 / gaps.len() as f64;
        gaps.sort_unstable();
        let median = gaps[(gaps.len() - 1) / 2] as f64;
        (mean, median, *gaps.last().unwrap_or(&0))
    };

    Ok(FingerprintVector {
        total_time_ms: session_end_ms,
        clicks_count: count("clicks_total"),
        keypress_count: count("keypresses_total"),
        resize_count: count("resizes_total"),
        mouse_sample_count: count("mouse_movement"),
        mouse_path_px: mouse_path_length(log)?,
        mouse_net_displacement_px: mouse_net_displacement(log)?,
        focus_loss_count,
        unfocused_ms: unfocused_duration(log, session_end_ms)?,
        dwell_mean_ms,
        dwell_median_ms,
        dwell_max_ms,
    })
}
