//! Brute-force re-derivations of the fingerprint features, written directly
//! from their definitions and sharing no code with the extractor.

use turkey_core::audit::{AuditEvent, EventPayload, FocusState, SessionEventLog};
use turkey_core::domain::BUILTIN_AUDITORS;
use turkey_core::extract_fingerprint;

use crate::support::{ensure, random_events, Rng};
use crate::Check;

const LOGS: usize = 500;
const MAX_EVENTS: u64 = 1000;
const REL_TOL: f64 = 1e-9;

pub fn run() -> Check {
    let mut rng = Rng::new(0x5eed_0003);
    let mut total_events = 0;
    for i in 0..LOGS {
        let n = if i < 3 {
            i
        } else {
            rng.range(0, MAX_EVENTS + 1) as usize
        };
        let mut events = random_events(&mut rng, n);
        // Arrival order differs from time order.
        for _ in 0..n / 10 {
            let a = rng.range(0, n as u64) as usize;
            let b = rng.range(0, n as u64) as usize;
            events.swap(a, b);
        }
        total_events += n;
        let last = events.iter().map(|e| e.t_ms).max().unwrap_or(0);
        let end = last + rng.range(0, 5000);

        let mut log = SessionEventLog::new("oracle", BUILTIN_AUDITORS);
        for e in &events {
            log.append(e.clone())
                .map_err(|r| format!("log {i}: append rejected: {r}"))?;
        }
        log.finalize().map_err(|e| e.to_string())?;
        let fp = extract_fingerprint(&log, end).map_err(|e| format!("log {i}: {e}"))?;

        let count = |kind: &str| events.iter().filter(|e| e.kind == kind).count() as u64;
        ensure!(
            fp.clicks_count == count("clicks_total"),
            "log {i}: clicks {} vs {}",
            fp.clicks_count,
            count("clicks_total")
        );
        ensure!(fp.keypress_count == count("keypresses_total"), "log {i}: keypresses");
        ensure!(fp.resize_count == count("resizes_total"), "log {i}: resizes");
        ensure!(
            fp.mouse_sample_count == count("mouse_movement"),
            "log {i}: mouse samples"
        );
        ensure!(fp.total_time_ms == end, "log {i}: total time");

        let unfocused = unfocused_by_millisecond(&events, end);
        ensure!(
            fp.unfocused_ms == unfocused,
            "log {i}: unfocused {} vs oracle {unfocused}",
            fp.unfocused_ms
        );

        let (path, net) = mouse_geometry(&events);
        close(fp.mouse_path_px, path, &format!("log {i}: mouse_path_px"))?;
        close(
            fp.mouse_net_displacement_px,
            net,
            &format!("log {i}: mouse_net_displacement_px"),
        )?;

        let (mean, median, max) = dwell(&events);
        close(fp.dwell_mean_ms, mean, &format!("log {i}: dwell_mean_ms"))?;
        close(fp.dwell_median_ms, median, &format!("log {i}: dwell_median_ms"))?;
        ensure!(
            fp.dwell_max_ms == max,
            "log {i}: dwell_max {} vs {max}",
            fp.dwell_max_ms
        );
    }
    Ok(format!("{LOGS} logs, {total_events} events agree with the oracles"))
}

fn close(got: f64, want: f64, what: &str) -> Result<(), String> {
    let scale = want.abs().max(1.0);
    ensure!((got - want).abs() <= REL_TOL * scale, "{what}: {got} vs oracle {want}");
    Ok(())
}

/// Events of one kind in time order, ties kept in arrival order.
fn in_time_order<'a>(events: &'a [AuditEvent], kind: &str) -> Vec<&'a AuditEvent> {
    let mut out: Vec<(usize, &AuditEvent)> = events.iter().enumerate().filter(|(_, e)| e.kind == kind).collect();
    out.sort_by(|a, b| (a.1.t_ms, a.0).cmp(&(b.1.t_ms, b.0)));
    out.into_iter().map(|(_, e)| e).collect()
}

/// Walks every millisecond of the session, replaying the focus state machine
/// up to that instant and counting the blurred ones.
fn unfocused_by_millisecond(events: &[AuditEvent], end: u64) -> u64 {
    let focus = in_time_order(events, "focus_changes");
    let mut next = 0;
    let mut blurred = false;
    let mut total = 0;
    for ms in 0..end {
        while next < focus.len() && focus[next].t_ms <= ms {
            if let EventPayload::Focus { state } = focus[next].payload {
                blurred = state == FocusState::Blur;
            }
            next += 1;
        }
        if blurred {
            total += 1;
        }
    }
    total
}

fn mouse_geometry(events: &[AuditEvent]) -> (f64, f64) {
    let points: Vec<(f64, f64)> = in_time_order(events, "mouse_movement")
        .into_iter()
        .filter_map(|e| match e.payload {
            EventPayload::Mouse { x_px, y_px } => Some((x_px as f64, y_px as f64)),
            _ => None,
        })
        .collect();
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let path = points.windows(2).map(|w| dist(w[0], w[1])).sum();
    let net = match (points.first(), points.last()) {
        (Some(&a), Some(&b)) => dist(a, b),
        _ => 0.0,
    };
    (path, net)
}

/// Mean, lower median and max of the gaps in the merged stream. The median
/// is found by counting rather than by indexing a sorted list.
fn dwell(events: &[AuditEvent]) -> (f64, f64, u64) {
    let mut ts: Vec<u64> = events.iter().map(|e| e.t_ms).collect();
    ts.sort_unstable();
    let gaps: Vec<u64> = (1..ts.len()).map(|i| ts[i] - ts[i - 1]).collect();
    if gaps.is_empty() {
        return (0.0, 0.0, 0);
    }
    let mean = gaps.iter().map(|&g| g as f64).sum::<f64>() / gaps.len() as f64;
    let k = (gaps.len() + 1) / 2;
    let median = gaps
        .iter()
        .copied()
        .filter(|&c| gaps.iter().filter(|&&g| g <= c).count() >= k)
        .min()
        .unwrap_or(0);
    (mean, median as f64, gaps.iter().copied().max().unwrap_or(0))
}
