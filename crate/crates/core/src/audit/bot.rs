use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::features::FingerprintVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotThresholds {
    /// Sessions shorter than this are flagged `instant_completion`.
    pub min_total_time_ms: u64,
    /// Uniform dwell gaps are only flagged with at least this many events.
    pub min_events_for_variance: u64,
}

impl Default for BotThresholds {
    fn default() -> Self {
        Self {
            min_total_time_ms: 2000,
            min_events_for_variance: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BotFlag {
    NoMouseActivity,
    InstantCompletion,
    ZeroDwellVariance,
}

impl BotFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            BotFlag::NoMouseActivity => "no_mouse_activity",
            BotFlag::InstantCompletion => "instant_completion",
            BotFlag::ZeroDwellVariance => "zero_dwell_variance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotSignalReport {
    pub flags: BTreeSet<BotFlag>,
    pub evaluated_thresholds: BotThresholds,
}

/// Heuristic flags suggesting automated completion.
///
/// Uniform gaps are detected as `dwell_mean_ms == dwell_max_ms`: the mean
/// reaches the maximum only when every gap equals it. The event count is the
/// sum of the fingerprint's event counters.
pub fn detect_bot_signals(fp: &FingerprintVector, thresholds: &BotThresholds) -> BotSignalReport {
    let mut flags = BTreeSet::new();
    if fp.mouse_sample_count == 0 && fp.mouse_path_px == 0.0 {
        flags.insert(BotFlag::NoMouseActivity);
    }
    if fp.total_time_ms < thresholds.min_total_time_ms {
        flags.insert(BotFlag::InstantCompletion);
    }
    if fp.counted_events() >= thresholds.min_events_for_variance.max(2) && fp.dwell_mean_ms == fp.dwell_max_ms as f64 {
        flags.insert(BotFlag::ZeroDwellVariance);
    }
    BotSignalReport {
        flags,
        evaluated_thresholds: *thresholds,
    }
}
