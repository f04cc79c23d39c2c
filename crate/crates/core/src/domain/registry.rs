//! Plugin descriptors and the registry that resolves step and auditor kinds.
//!
//! A plugin declares what it returns on submit (its field schema), which
//! fields its template receives, and where its script and template assets
//! live. Administration, storage and export are derived from the descriptor.
//!
//! Descriptors can be loaded from TOML manifests, one file per plugin, under
//! `<asset_root>/plugins/`:
//!
//! ```toml
//! plugin = "auditor"
//! kind = "scroll_depth"
//! model_label = "survey.auditorscrolldepthdata"
//! aggregation = "event_list"
//! client_script_ref = "plugins/scroll_depth.js"
//!
//! [[field_schema]]
//! name = "max_depth"
//! type = "integer"
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::is_snake_case;

/// Prefix of every exported model label.
pub const MODEL_PREFIX: &str = "survey";

pub const BUILTIN_AUDITORS: [&str; 5] = [
    "clicks_total",
    "focus_changes",
    "keypresses_total",
    "mouse_movement",
    "resizes_total",
];

pub const BUILTIN_STEP_KINDS: [&str; 3] = ["multiple_answer", "multiple_choice", "text_response"];

/// `clicks_total` → `survey.auditorclickstotaldata`.
pub fn default_model_label(kind: &str) -> String {
    format!("{MODEL_PREFIX}.auditor{}data", kind.replace('_', ""))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarType {
    Integer,
    String,
    Float,
}

impl ScalarType {
    pub fn as_str(self) -> &'static str {
        match self {
            ScalarType::Integer => "integer",
            ScalarType::String => "string",
            ScalarType::Float => "float",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "integer" => Some(ScalarType::Integer),
            "string" => Some(ScalarType::String),
            "float" => Some(ScalarType::Float),
            _ => None,
        }
    }

    /// Parses the textual form written by [`Scalar`]'s `Display`.
    pub fn parse_value(self, text: &str) -> Option<Scalar> {
        match self {
            ScalarType::Integer => text.parse().ok().map(Scalar::Integer),
            ScalarType::Float => text.parse::<f64>().ok().filter(|v| v.is_finite()).map(Scalar::Float),
            ScalarType::String => Some(Scalar::String(text.to_owned())),
        }
    }

    /// Converts a JSON value, accepting integers where floats are expected.
    pub fn from_json(self, value: &serde_json::Value) -> Option<Scalar> {
        match self {
            ScalarType::Integer => value.as_i64().map(Scalar::Integer),
            ScalarType::Float => value.as_f64().filter(|v| v.is_finite()).map(Scalar::Float),
            ScalarType::String => value.as_str().map(|s| Scalar::String(s.to_owned())),
        }
    }
}

/// A typed field value in an answer, event payload or exported row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Integer(i64),
    Float(f64),
    String(String),
}

impl Scalar {
    pub fn scalar_type(&self) -> ScalarType {
        match self {
            Scalar::Integer(_) => ScalarType::Integer,
            Scalar::Float(_) => ScalarType::Float,
            Scalar::String(_) => ScalarType::String,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Scalar::Integer(v) => (*v).into(),
            Scalar::Float(v) => (*v).into(),
            Scalar::String(v) => v.clone().into(),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Integer(v) => write!(f, "{v}"),
            // `Display` for f64 is the shortest representation that parses back exactly.
            Scalar::Float(v) => write!(f, "{v}"),
            Scalar::String(v) => f.write_str(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ScalarType,
}

impl FieldSpec {
    pub fn new(name: &str, ty: ScalarType) -> Self {
        Self {
            name: name.to_owned(),
            ty,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// One exported row per response holding the number of captured events.
    Counter,
    /// One exported row per captured event.
    EventList,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Counter => "counter",
            Aggregation::EventList => "event_list",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "counter" => Some(Aggregation::Counter),
            "event_list" => Some(Aggregation::EventList),
            _ => None,
        }
    }
}

/// Describes an auditor. `field_schema` lists the exported fields after the
/// implicit leading `general_model` link. For event-list auditors a field
/// named `t_ms` is filled from the event timestamp; the remaining fields come
/// from the event payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditorDescriptor {
    pub kind: String,
    pub model_label: String,
    pub field_schema: Vec<FieldSpec>,
    pub aggregation: Aggregation,
    pub client_script_ref: String,
    #[serde(default)]
    pub client_template_ref: Option<String>,
}

impl AuditorDescriptor {
    /// Payload fields an event of this auditor carries (event-list auditors only).
    pub fn payload_fields(&self) -> impl Iterator<Item = &FieldSpec> {
        self.field_schema.iter().filter(|f| f.name != "t_ms")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepPluginDescriptor {
    pub kind: String,
    pub answer_schema: Vec<FieldSpec>,
    #[serde(default)]
    pub template_fields: Vec<String>,
    pub render_template_ref: String,
    #[serde(default)]
    pub client_script_ref: Option<String>,
}

/// One manifest document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "plugin", rename_all = "snake_case")]
pub enum PluginDescriptor {
    Auditor(AuditorDescriptor),
    Step(StepPluginDescriptor),
}

impl PluginDescriptor {
    pub fn kind(&self) -> &str {
        match self {
            PluginDescriptor::Auditor(d) => &d.kind,
            PluginDescriptor::Step(d) => &d.kind,
        }
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("kind {0:?} is already registered")]
    DuplicateKind(String),
    #[error("model label {0:?} is already registered")]
    DuplicateModelLabel(String),
    #[error("asset {0:?} does not exist under the asset root")]
    MissingAsset(String),
    #[error("invalid descriptor for {kind:?}: {reason}")]
    InvalidDescriptor { kind: String, reason: String },
    #[error("cannot read manifest {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse manifest {path}: {source}")]
    Manifest { path: PathBuf, source: toml::de::Error },
}

/// Known step and auditor kinds. The built-ins are always present.
#[derive(Debug, Clone)]
pub struct PluginRegistry {
    asset_root: Option<PathBuf>,
    auditors: BTreeMap<String, AuditorDescriptor>,
    steps: BTreeMap<String, StepPluginDescriptor>,
}

impl PluginRegistry {
    pub fn with_builtins(asset_root: Option<PathBuf>) -> Self {
        let mut registry = Self {
            asset_root,
            auditors: BTreeMap::new(),
            steps: BTreeMap::new(),
        };
        for d in builtin_auditors() {
            registry.auditors.insert(d.kind.clone(), d);
        }
        for d in builtin_steps() {
            registry.steps.insert(d.kind.clone(), d);
        }
        registry
    }

    pub fn asset_root(&self) -> Option<&Path> {
        self.asset_root.as_deref()
    }

    pub fn auditor(&self, kind: &str) -> Option<&AuditorDescriptor> {
        self.auditors.get(kind)
    }

    pub fn step_plugin(&self, kind: &str) -> Option<&StepPluginDescriptor> {
        self.steps.get(kind)
    }

    pub fn auditors(&self) -> impl Iterator<Item = &AuditorDescriptor> {
        self.auditors.values()
    }

    pub fn step_plugins(&self) -> impl Iterator<Item = &StepPluginDescriptor> {
        self.steps.values()
    }

    pub fn register(&mut self, descriptor: PluginDescriptor) -> Result<(), RegistryError> {
        let kind = descriptor.kind().to_owned();
        let invalid = |reason: &str| RegistryError::InvalidDescriptor {
            kind: kind.clone(),
            reason: reason.to_owned(),
        };
        if !is_snake_case(&kind) {
            return Err(invalid("kind must be snake_case"));
        }
        if self.auditors.contains_key(&kind) || self.steps.contains_key(&kind) {
            return Err(RegistryError::DuplicateKind(kind));
        }
        match descriptor {
            PluginDescriptor::Auditor(d) => {
                if self.auditors.values().any(|a| a.model_label == d.model_label) {
                    return Err(RegistryError::DuplicateModelLabel(d.model_label));
                }
                if !d.model_label.starts_with(&format!("{MODEL_PREFIX}."))
                    || d.model_label
                        .chars()
                        .any(|c| !(c.is_ascii_alphanumeric() || c == '.' || c == '_'))
                {
                    return Err(invalid("model_label must look like survey.<name>"));
                }
                check_fields(&d.field_schema).map_err(|r| invalid(&r))?;
                match d.aggregation {
                    Aggregation::Counter if d.field_schema.len() != 1 => {
                        return Err(invalid("counter auditors have exactly one field"));
                    }
                    Aggregation::Counter if d.field_schema[0].ty != ScalarType::Integer => {
                        return Err(invalid("counter field must be an integer"));
                    }
                    Aggregation::EventList if d.field_schema.is_empty() => {
                        return Err(invalid("event_list auditors need at least one field"));
                    }
                    _ => {}
                }
                if let Some(t) = d.field_schema.iter().find(|f| f.name == "t_ms") {
                    if t.ty != ScalarType::Integer || d.aggregation != Aggregation::EventList {
                        return Err(invalid("t_ms is an integer event-list field"));
                    }
                }
                self.check_asset(&d.client_script_ref)?;
                if let Some(template) = &d.client_template_ref {
                    self.check_asset(template)?;
                }
                self.auditors.insert(kind, d);
            }
            PluginDescriptor::Step(d) => {
                if d.answer_schema.is_empty() {
                    return Err(invalid("answer_schema must be nonempty"));
                }
                check_fields(&d.answer_schema).map_err(|r| invalid(&r))?;
                self.check_asset(&d.render_template_ref)?;
                if let Some(script) = &d.client_script_ref {
                    self.check_asset(script)?;
                }
                self.steps.insert(kind, d);
            }
        }
        Ok(())
    }

    /// Registers every `*.toml` manifest in `<asset_root>/plugins`, in file
    /// name order. Returns the registered kinds.
    pub fn load_manifests(&mut self) -> Result<Vec<String>, RegistryError> {
        let Some(root) = self.asset_root.clone() else {
            return Ok(Vec::new());
        };
        let dir = root.join("plugins");
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let io = |path: &Path| {
            let path = path.to_owned();
            move |source| RegistryError::Io { path, source }
        };
        let mut paths = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(io(&dir))? {
            let path = entry.map_err(io(&dir))?.path();
            if path.extension().is_some_and(|e| e == "toml") {
                paths.push(path);
            }
        }
        paths.sort();
        let mut kinds = Vec::with_capacity(paths.len());
        for path in paths {
            let text = std::fs::read_to_string(&path).map_err(io(&path))?;
            let descriptor: PluginDescriptor = toml::from_str(&text).map_err(|source| RegistryError::Manifest {
                path: path.clone(),
                source,
            })?;
            kinds.push(descriptor.kind().to_owned());
            self.register(descriptor)?;
        }
        Ok(kinds)
    }

    fn check_asset(&self, reference: &str) -> Result<(), RegistryError> {
        let missing = || RegistryError::MissingAsset(reference.to_owned());
        let relative = Path::new(reference);
        if reference.is_empty() || !relative.components().all(|c| matches!(c, Component::Normal(_))) {
            return Err(missing());
        }
        let root = self.asset_root.as_ref().ok_or_else(missing)?;
        if root.join(relative).is_file() {
            Ok(())
        } else {
            Err(missing())
        }
    }
}

fn check_fields(fields: &[FieldSpec]) -> Result<(), String> {
    let mut seen = HashSet::new();
    for f in fields {
        if !is_snake_case(&f.name) {
            return Err(format!("field name {:?} must be snake_case", f.name));
        }
        if f.name == "general_model" {
            return Err("general_model is implicit".into());
        }
        if !seen.insert(f.name.as_str()) {
            return Err(format!("field {:?} declared twice", f.name));
        }
    }
    Ok(())
}

fn builtin_auditors() -> Vec<AuditorDescriptor> {
    use ScalarType::*;
    let auditor = |kind: &str, aggregation, fields: &[(&str, ScalarType)]| AuditorDescriptor {
        kind: kind.to_owned(),
        model_label: default_model_label(kind),
        field_schema: fields.iter().map(|(n, t)| FieldSpec::new(n, *t)).collect(),
        aggregation,
        client_script_ref: format!("runner/auditors/{kind}.js"),
        client_template_ref: None,
    };
    vec![
        auditor("clicks_total", Aggregation::Counter, &[("count", Integer)]),
        auditor(
            "focus_changes",
            Aggregation::EventList,
            &[("t_ms", Integer), ("state", String)],
        ),
        auditor("keypresses_total", Aggregation::Counter, &[("count", Integer)]),
        auditor(
            "mouse_movement",
            Aggregation::EventList,
            &[("t_ms", Integer), ("x", Integer), ("y", Integer)],
        ),
        auditor("resizes_total", Aggregation::Counter, &[("count", Integer)]),
    ]
}

fn builtin_steps() -> Vec<StepPluginDescriptor> {
    let step = |kind: &str, answer: FieldSpec, template_fields: &[&str]| StepPluginDescriptor {
        kind: kind.to_owned(),
        answer_schema: vec![answer],
        template_fields: template_fields.iter().map(|s| s.to_string()).collect(),
        render_template_ref: format!("runner/steps/{kind}.html"),
        client_script_ref: None,
    };
    vec![
        step(
            "multiple_answer",
            FieldSpec::new("choices", ScalarType::String),
            &["prompt", "options", "required"],
        ),
        step(
            "multiple_choice",
            FieldSpec::new("choice", ScalarType::Integer),
            &["prompt", "options", "required"],
        ),
        step(
            "text_response",
            FieldSpec::new("text", ScalarType::String),
            &["prompt", "required"],
        ),
    ]
}
