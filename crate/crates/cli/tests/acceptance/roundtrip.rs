use std::collections::BTreeMap;

use chrono::DateTime;
use turkey_core::audit::FingerprintVector;
use turkey_core::domain::{
    default_model_label, Aggregation, AnswerValue, FieldSpec, OrderingMode, Scalar, ScalarType, StepDefinition,
    StepKind, TaskStatus,
};
use turkey_core::export::{
    AuditorRow, AuditorSchema, ExportDocument, ExportedResponse, ExportedStep, ExportedTask, ResponseRecord,
    StepAnswerRow, EXPORT_VERSION,
};
use turkey_core::{parse_export, serialize_document};

use crate::support::{ensure, Rng};
use crate::Check;

const DOCUMENTS: usize = 1000;

pub fn run() -> Check {
    let mut rng = Rng::new(0x5eed_0002);
    let (mut responses, mut rows) = (0, 0);
    for i in 0..DOCUMENTS {
        let doc = document(&mut rng, i);
        responses += doc.responses.len();
        rows += doc.auditor_rows().count();
        let xml = serialize_document(&doc);
        let back = parse_export(xml.as_bytes()).map_err(|e| format!("document {i}: {e}"))?;
        ensure!(back == doc, "document {i} changed in the round trip:\n{xml}");
    }
    Ok(format!(
        "{DOCUMENTS} documents, {responses} responses, {rows} auditor rows"
    ))
}

const TEXT_ALPHABET: &[&str] = &[
    "<", ">", "&", "\"", "'", "\n", "\r\n", "\t", " ", "]]>", "é", "中", "🦃", "ß", "\u{a0}", "a", "b", "z", "0",
];

fn text(rng: &mut Rng) -> String {
    (0..rng.range(0, 16)).map(|_| *rng.pick(TEXT_ALPHABET)).collect()
}

fn scalar(rng: &mut Rng, ty: ScalarType) -> Scalar {
    match ty {
        ScalarType::Integer => Scalar::Integer(rng.next() as i64),
        ScalarType::Float => {
            let f = f64::from_bits(rng.next());
            Scalar::Float(if f.is_finite() { f } else { rng.next() as f64 / 7.0 })
        }
        ScalarType::String => Scalar::String(text(rng)),
    }
}

const TYPES: [ScalarType; 3] = [ScalarType::Integer, ScalarType::Float, ScalarType::String];

fn auditor_pool() -> Vec<AuditorSchema> {
    let registry = turkey_core::PluginRegistry::with_builtins(None);
    let mut pool: Vec<AuditorSchema> = registry.auditors().map(AuditorSchema::from).collect();
    pool.push(AuditorSchema {
        kind: "scroll_depth".into(),
        model_label: default_model_label("scroll_depth"),
        aggregation: Aggregation::EventList,
        field_schema: vec![
            FieldSpec::new("t_ms", ScalarType::Integer),
            FieldSpec::new("depth", ScalarType::Float),
            FieldSpec::new("section", ScalarType::String),
        ],
    });
    pool.push(AuditorSchema {
        kind: "paste_total".into(),
        model_label: default_model_label("paste_total"),
        aggregation: Aggregation::Counter,
        field_schema: vec![FieldSpec::new("count", ScalarType::Integer)],
    });
    pool.sort_by(|a, b| a.kind.cmp(&b.kind));
    pool
}

fn steps(rng: &mut Rng) -> Vec<ExportedStep> {
    (0..rng.range(0, 6))
        .map(|i| {
            let kind = match rng.range(0, 4) {
                0 => StepKind::MultipleChoice,
                1 => StepKind::MultipleAnswer,
                2 => StepKind::TextResponse,
                _ => StepKind::Custom("likert_scale".into()),
            };
            let options = match kind {
                StepKind::MultipleChoice | StepKind::MultipleAnswer => {
                    (0..rng.range(2, 6)).map(|_| format!("o{}", text(rng))).collect()
                }
                _ => vec![],
            };
            let answer_schema = matches!(kind, StepKind::Custom(_)).then(|| {
                (0..rng.range(1, 4))
                    .map(|f| FieldSpec::new(&format!("field_{f}"), *rng.pick(&TYPES)))
                    .collect()
            });
            ExportedStep {
                definition: StepDefinition {
                    step_id: format!("s{}", i + 1).into(),
                    kind,
                    prompt: format!("Q{}", text(rng)),
                    options,
                    required: rng.chance(0.5),
                },
                answer_schema,
            }
        })
        .collect()
}

fn answer(rng: &mut Rng, step: &ExportedStep) -> AnswerValue {
    let n = step.definition.options.len() as u64;
    match &step.definition.kind {
        StepKind::MultipleChoice => AnswerValue::Choice(rng.range(0, n) as u32),
        StepKind::MultipleAnswer => AnswerValue::Choices((0..n as u32).filter(|_| rng.chance(0.5)).collect()),
        StepKind::TextResponse => AnswerValue::Text(text(rng)),
        StepKind::Custom(_) => AnswerValue::Custom(
            step.answer_schema
                .iter()
                .flatten()
                .map(|f| (f.name.clone(), scalar(rng, f.ty)))
                .collect(),
        ),
    }
}

fn fingerprint(rng: &mut Rng) -> FingerprintVector {
    let mut u = || rng.range(0, 10_000_000);
    FingerprintVector {
        total_time_ms: u(),
        clicks_count: u(),
        keypress_count: u(),
        resize_count: u(),
        mouse_sample_count: u(),
        mouse_path_px: u() as f64 / 3.0,
        mouse_net_displacement_px: u() as f64 / 7.0,
        focus_loss_count: u(),
        unfocused_ms: u(),
        dwell_mean_ms: u() as f64 / 11.0,
        dwell_median_ms: u() as f64,
        dwell_max_ms: u(),
    }
}

fn document(rng: &mut Rng, index: usize) -> ExportDocument {
    let task_id: turkey_core::TaskId = format!("task-{index}-ü").into();
    let steps = steps(rng);
    let auditors: Vec<AuditorSchema> = auditor_pool().into_iter().filter(|_| rng.chance(0.5)).collect();
    let mut answer_pk = 0;
    let mut row_pks: BTreeMap<String, i64> = BTreeMap::new();
    let responses = (0..rng.range(0, 5))
        .map(|i| {
            let pk = i as i64 + 1;
            let mut answers = Vec::new();
            for s in &steps {
                if rng.chance(0.8) {
                    answer_pk += 1;
                    answers.push(StepAnswerRow {
                        pk: answer_pk,
                        general_model: pk,
                        step_id: s.definition.step_id.clone(),
                        value: answer(rng, s),
                    });
                }
            }
            let auditors = auditors
                .iter()
                .map(|schema| {
                    let n = match schema.aggregation {
                        Aggregation::Counter => 1,
                        Aggregation::EventList => rng.range(0, 6),
                    };
                    let rows = (0..n)
                        .map(|_| {
                            let next = row_pks.entry(schema.model_label.clone()).or_insert(0);
                            *next += 1;
                            AuditorRow {
                                model: schema.model_label.clone(),
                                pk: *next,
                                general_model: pk,
                                fields: schema
                                    .field_schema
                                    .iter()
                                    .map(|f| (f.name.clone(), scalar(rng, f.ty)))
                                    .collect(),
                            }
                        })
                        .collect();
                    (schema.kind.clone(), rows)
                })
                .collect();
            ExportedResponse {
                record: ResponseRecord {
                    pk,
                    task_id: task_id.clone(),
                    worker_id: format!("W{}", text(rng)),
                    assignment_id: format!("A{i}"),
                    hit_id: format!("H{}", text(rng)),
                    step_order_seed: rng.next(),
                    answers,
                    submitted_at: DateTime::from_timestamp_millis(rng.range(0, 4_000_000_000_000) as i64)
                        .unwrap_or_default(),
                    fingerprint: fingerprint(rng),
                },
                auditors,
            }
        })
        .collect();
    ExportDocument {
        version: EXPORT_VERSION,
        task: ExportedTask {
            task_id,
            name: format!("N{}", text(rng)),
            description: text(rng),
            ordering_mode: if rng.chance(0.5) {
                OrderingMode::Randomized
            } else {
                OrderingMode::Fixed
            },
            status: *rng.pick(&[TaskStatus::Draft, TaskStatus::Published, TaskStatus::Closed]),
            created_at: DateTime::from_timestamp_millis(rng.range(0, 4_000_000_000_000) as i64).unwrap_or_default(),
            steps,
            auditors,
        },
        responses,
    }
}
