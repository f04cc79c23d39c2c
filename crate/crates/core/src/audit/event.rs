use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::domain::{Aggregation, AuditorDescriptor, PluginRegistry, Scalar};
use crate::text::is_xml_safe;

/// Longest accepted click target selector, in characters.
pub const MAX_TARGET_LEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocusState {
    Focus,
    Blur,
}

impl FocusState {
    pub fn as_str(self) -> &'static str {
        match self {
            FocusState::Focus => "focus",
            FocusState::Blur => "blur",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventPayload {
    Mouse {
        x_px: u32,
        y_px: u32,
    },
    Click {
        x_px: u32,
        y_px: u32,
        target: String,
    },
    Focus {
        state: FocusState,
    },
    /// Key identity is never captured.
    Keypress,
    Resize {
        width_px: u32,
        height_px: u32,
    },
    Custom {
        fields: Vec<(String, Scalar)>,
    },
}

/// One captured browser interaction. `t_ms` counts from session page load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub kind: String,
    pub t_ms: u64,
    pub payload: EventPayload,
}

impl AuditEvent {
    pub fn mouse(t_ms: u64, x_px: u32, y_px: u32) -> Self {
        Self {
            kind: "mouse_movement".into(),
            t_ms,
            payload: EventPayload::Mouse { x_px, y_px },
        }
    }

    pub fn click(t_ms: u64, x_px: u32, y_px: u32, target: &str) -> Self {
        Self {
            kind: "clicks_total".into(),
            t_ms,
            payload: EventPayload::Click {
                x_px,
                y_px,
                target: target.to_owned(),
            },
        }
    }

    pub fn focus(t_ms: u64, state: FocusState) -> Self {
        Self {
            kind: "focus_changes".into(),
            t_ms,
            payload: EventPayload::Focus { state },
        }
    }

    pub fn keypress(t_ms: u64) -> Self {
        Self {
            kind: "keypresses_total".into(),
            t_ms,
            payload: EventPayload::Keypress,
        }
    }

    pub fn resize(t_ms: u64, width_px: u32, height_px: u32) -> Self {
        Self {
            kind: "resizes_total".into(),
            t_ms,
            payload: EventPayload::Resize { width_px, height_px },
        }
    }

    /// Value of an exported field for event-list rows.
    pub fn field_value(&self, name: &str) -> Option<Scalar> {
        if name == "t_ms" {
            return Some(Scalar::Integer(self.t_ms as i64));
        }
        match (&self.payload, name) {
            (EventPayload::Mouse { x_px, .. } | EventPayload::Click { x_px, .. }, "x") => {
                Some(Scalar::Integer(i64::from(*x_px)))
            }
            (EventPayload::Mouse { y_px, .. } | EventPayload::Click { y_px, .. }, "y") => {
                Some(Scalar::Integer(i64::from(*y_px)))
            }
            (EventPayload::Click { target, .. }, "target") => Some(Scalar::String(target.clone())),
            (EventPayload::Focus { state }, "state") => Some(Scalar::String(state.as_str().to_owned())),
            (EventPayload::Resize { width_px, .. }, "width") => Some(Scalar::Integer(i64::from(*width_px))),
            (EventPayload::Resize { height_px, .. }, "height") => Some(Scalar::Integer(i64::from(*height_px))),
            (EventPayload::Custom { fields }, _) => fields.iter().find(|(n, _)| n == name).map(|(_, v)| v.clone()),
            _ => None,
        }
    }

    /// The wire form `{"kind", "t_ms", "data"}` accepted by [`decode_event`].
    pub fn to_wire(&self) -> Value {
        let data = match &self.payload {
            EventPayload::Mouse { x_px, y_px } => serde_json::json!({"x_px": x_px, "y_px": y_px}),
            EventPayload::Click { x_px, y_px, target } => {
                serde_json::json!({"x_px": x_px, "y_px": y_px, "target": target})
            }
            EventPayload::Focus { state } => serde_json::json!({"state": state}),
            EventPayload::Keypress => serde_json::json!({}),
            EventPayload::Resize { width_px, height_px } => {
                serde_json::json!({"width_px": width_px, "height_px": height_px})
            }
            EventPayload::Custom { fields } => Value::Object(
                fields
                    .iter()
                    .map(|(n, v)| (n.clone(), v.to_json()))
                    .collect::<Map<_, _>>(),
            ),
        };
        serde_json::json!({"kind": self.kind, "t_ms": self.t_ms, "data": data})
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    SessionFinalized,
    UnknownKind,
    MalformedPayload,
    NegativeTimestamp,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::SessionFinalized => "session_finalized",
            RejectReason::UnknownKind => "unknown_kind",
            RejectReason::MalformedPayload => "malformed_payload",
            RejectReason::NegativeTimestamp => "negative_timestamp",
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PointData {
    x_px: u32,
    y_px: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClickData {
    x_px: u32,
    y_px: u32,
    target: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FocusData {
    state: FocusState,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmptyData {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ResizeData {
    width_px: u32,
    height_px: u32,
}

fn parse_data<T: serde::de::DeserializeOwned>(data: Value) -> Result<T, RejectReason> {
    serde_json::from_value(data).map_err(|_| RejectReason::MalformedPayload)
}

/// Decodes one wire event and checks it against the auditors enabled for the
/// session. Checks run in order: shape, kind, timestamp sign, payload.
pub fn decode_event(
    raw: &Value,
    registry: &PluginRegistry,
    enabled: &BTreeSet<String>,
) -> Result<AuditEvent, RejectReason> {
    decode_event_with(raw, |kind| registry.auditor(kind).filter(|_| enabled.contains(kind)))
}

/// As [`decode_event`], resolving kinds through `lookup`; a kind it does not
/// know is rejected as unknown.
pub fn decode_event_with<'a>(
    raw: &Value,
    lookup: impl Fn(&str) -> Option<&'a AuditorDescriptor>,
) -> Result<AuditEvent, RejectReason> {
    use RejectReason::*;

    let obj = raw.as_object().ok_or(MalformedPayload)?;
    if obj.keys().any(|k| !matches!(k.as_str(), "kind" | "t_ms" | "data")) {
        return Err(MalformedPayload);
    }
    let kind = obj.get("kind").and_then(Value::as_str).ok_or(MalformedPayload)?;
    let descriptor = lookup(kind).ok_or(UnknownKind)?;
    let t = obj.get("t_ms").ok_or(MalformedPayload)?;
    if t.as_i64().is_some_and(|v| v < 0) || t.as_f64().is_some_and(|v| v < 0.0) {
        return Err(NegativeTimestamp);
    }
    let t_ms = t.as_i64().ok_or(MalformedPayload)? as u64;

    let data = match obj.get("data") {
        None | Some(Value::Null) => Value::Object(Map::new()),
        Some(v) => v.clone(),
    };
    let payload = match kind {
        "mouse_movement" => {
            let p: PointData = parse_data(data)?;
            EventPayload::Mouse {
                x_px: p.x_px,
                y_px: p.y_px,
            }
        }
        "clicks_total" => {
            let c: ClickData = parse_data(data)?;
            if c.target.chars().count() > MAX_TARGET_LEN || !is_xml_safe(&c.target) {
                return Err(MalformedPayload);
            }
            EventPayload::Click {
                x_px: c.x_px,
                y_px: c.y_px,
                target: c.target,
            }
        }
        "focus_changes" => {
            let f: FocusData = parse_data(data)?;
            EventPayload::Focus { state: f.state }
        }
        "keypresses_total" => {
            let EmptyData {} = parse_data(data)?;
            EventPayload::Keypress
        }
        "resizes_total" => {
            let r: ResizeData = parse_data(data)?;
            if r.width_px == 0 || r.height_px == 0 {
                return Err(MalformedPayload);
            }
            EventPayload::Resize {
                width_px: r.width_px,
                height_px: r.height_px,
            }
        }
        _ => {
            let map = data.as_object().ok_or(MalformedPayload)?;
            let fields = match descriptor.aggregation {
                // Counter auditors only count events; their payload is not kept.
                Aggregation::Counter => Vec::new(),
                Aggregation::EventList => {
                    let expected: Vec<_> = descriptor.payload_fields().collect();
                    if map.len() != expected.len() {
                        return Err(MalformedPayload);
                    }
                    let mut fields = Vec::with_capacity(expected.len());
                    for spec in expected {
                        let value = map
                            .get(&spec.name)
                            .and_then(|v| spec.ty.from_json(v))
                            .ok_or(MalformedPayload)?;
                        if let Scalar::String(s) = &value {
                            if !is_xml_safe(s) {
                                return Err(MalformedPayload);
                            }
                        }
                        fields.push((spec.name.clone(), value));
                    }
                    fields
                }
            };
            EventPayload::Custom { fields }
        }
    };
    Ok(AuditEvent {
        kind: kind.to_owned(),
        t_ms,
        payload,
    })
}
