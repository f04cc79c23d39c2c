use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use parking_lot::Mutex;
use turkey_core::service::{FaultInjector, Handshake, IngestRequest, SubmitRequest};
use turkey_core::store::SubmitStage;
use turkey_core::{parse_export, Aggregation, ExportDocument, Scalar, Service, Store, TaskId};

use crate::support::{self, check_integrity, demo_answers, ensure, kind_counts, random_events, wire, Rng};
use crate::Check;

const CHILD_ENV: &str = "TURKEY_ACCEPTANCE_ABORT";

#[derive(Clone, Copy, Debug)]
enum Mode {
    Error,
    Panic,
    Abort,
}

#[derive(Default)]
struct Faults(Mutex<Option<(SubmitStage, Mode)>>);

impl FaultInjector for Faults {
    fn fail_at(&self, stage: SubmitStage) -> bool {
        match *self.0.lock() {
            Some((s, Mode::Error)) if s == stage => true,
            Some((s, Mode::Panic)) if s == stage => panic!("injected panic at {}", stage.as_str()),
            Some((s, Mode::Abort)) if s == stage => std::process::abort(),
            _ => false,
        }
    }
}

fn open(db: &Path, faults: Arc<Faults>) -> Result<Service, String> {
    let store = Store::open(db).map_err(|e| e.to_string())?;
    Ok(support::service(store).with_fault_injector(faults))
}

/// Opens a session with some ingested events and returns its token, the
/// submit request and every event the response should carry.
fn prepare(
    svc: &Service,
    task: &TaskId,
    rng: &mut Rng,
    n: usize,
) -> Result<(String, SubmitRequest, Vec<turkey_core::AuditEvent>), String> {
    let hs = Handshake::live(
        &format!("ATOM-{n}"),
        "H",
        &format!("W{n}"),
        "https://workersandbox.mturk.com",
    );
    let token = svc.get_task_bundle(task, &hs).map_err(|e| e.to_string())?.session_token;
    let events = random_events(rng, 60);
    svc.ingest_batch(
        &token,
        &IngestRequest {
            batch_seq: 1,
            events: wire(&events[..50]),
        },
    )
    .map_err(|e| e.to_string())?;
    let req = SubmitRequest {
        answers: demo_answers(rng),
        events: wire(&events[50..]),
        end_ms: events.iter().map(|e| e.t_ms).max().unwrap_or(0),
    };
    Ok((token, req, events))
}

fn assignment_rows(doc: &ExportDocument, assignment: &str) -> usize {
    doc.responses
        .iter()
        .filter(|r| r.record.assignment_id == assignment)
        .count()
}

/// Every exported response carries all of its rows.
fn check_complete(doc: &ExportDocument, expected: &[(String, Vec<turkey_core::AuditEvent>)]) -> Result<(), String> {
    check_integrity(doc)?;
    for r in &doc.responses {
        let id = &r.record.assignment_id;
        let events = &expected
            .iter()
            .find(|(a, _)| a == id)
            .ok_or_else(|| format!("unexpected response {id}"))?
            .1;
        ensure!(r.record.answers.len() == 3, "{id}: {} answers", r.record.answers.len());
        let counts = kind_counts(events);
        for schema in &doc.task.auditors {
            let rows = r.auditors.get(&schema.kind).map(Vec::as_slice).unwrap_or(&[]);
            let want = counts.get(&schema.kind).copied().unwrap_or(0);
            let ok = match schema.aggregation {
                Aggregation::EventList => rows.len() == want,
                Aggregation::Counter => {
                    matches!(rows, [row] if matches!(row.fields.as_slice(), [(_, Scalar::Integer(n))] if *n as usize == want))
                }
            };
            ensure!(ok, "{id}: partial {} rows", schema.kind);
        }
        ensure!(r.record.fingerprint.counted_events() > 0, "{id}: empty fingerprint");
    }
    Ok(())
}

pub fn run() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let db = support::temp_db(dir.path());
    let faults = Arc::new(Faults::default());
    let mut svc = open(&db, faults.clone())?;
    let task = support::demo_task(&svc);
    let mut rng = Rng::new(0x5eed_0007);
    let mut expected = Vec::new();
    let mut injected = 0;

    for (n, (stage, mode)) in SubmitStage::ALL
        .iter()
        .flat_map(|s| [(*s, Mode::Error), (*s, Mode::Panic), (*s, Mode::Abort)])
        .enumerate()
    {
        let assignment = format!("ATOM-{n}");
        let (token, req, events) = prepare(&svc, &task, &mut rng, n)?;
        match mode {
            Mode::Abort => {
                drop(svc);
                let status = Command::new(std::env::current_exe().map_err(|e| e.to_string())?)
                    .env(
                        CHILD_ENV,
                        format!(
                            "{}|{}|{}",
                            stage.as_str(),
                            token,
                            serde_json::to_string(&req).map_err(|e| e.to_string())?
                        ),
                    )
                    .env("TURKEY_ACCEPTANCE_DB", &db)
                    .status()
                    .map_err(|e| e.to_string())?;
                ensure!(!status.success(), "child survived an abort at {}", stage.as_str());
                svc = open(&db, faults.clone())?;
            }
            _ => {
                *faults.0.lock() = Some((stage, mode));
                let outcome = panic::catch_unwind(AssertUnwindSafe(|| svc.submit_response(&token, &req)));
                *faults.0.lock() = None;
                match outcome {
                    Ok(Ok(_)) => return Err(format!("submit succeeded despite {mode:?} at {}", stage.as_str())),
                    Ok(Err(_)) | Err(_) => {}
                }
            }
        }
        injected += 1;

        let doc = svc.export_document(&task).map_err(|e| e.to_string())?;
        ensure!(
            assignment_rows(&doc, &assignment) == 0,
            "{mode:?} at {} left a response behind",
            stage.as_str()
        );
        check_complete(&doc, &expected)?;

        svc.submit_response(&token, &req)
            .map_err(|e| format!("clean retry after {mode:?} at {}: {e}", stage.as_str()))?;
        expected.push((assignment, events));
        let doc = svc.export_document(&task).map_err(|e| e.to_string())?;
        check_complete(&doc, &expected)?;
    }

    drop(svc);
    let reopened = open(&db, faults)?;
    let xml = reopened.export_xml(&task).map_err(|e| e.to_string())?;
    let doc = parse_export(xml.as_bytes()).map_err(|e| e.to_string())?;
    ensure!(
        doc.responses.len() == expected.len(),
        "{} responses after reopen",
        doc.responses.len()
    );
    check_complete(&doc, &expected)?;
    Ok(format!(
        "{injected} faults over {} stages (error, panic, process abort); no partial responses",
        SubmitStage::ALL.len()
    ))
}

/// In the child process spawned by [`run`]: submits with an abort at the
/// requested stage. Returns false when not running as that child.
pub fn child_main() -> bool {
    let Ok(spec) = std::env::var(CHILD_ENV) else {
        return false;
    };
    let mut parts = spec.splitn(3, '|');
    let (Some(stage), Some(token), Some(req)) = (parts.next(), parts.next(), parts.next()) else {
        std::process::exit(90);
    };
    let stage = SubmitStage::ALL
        .into_iter()
        .find(|s| s.as_str() == stage)
        .unwrap_or_else(|| std::process::exit(91));
    let req: SubmitRequest = serde_json::from_str(req).unwrap_or_else(|_| std::process::exit(92));
    let db = std::env::var_os("TURKEY_ACCEPTANCE_DB").unwrap_or_else(|| std::process::exit(93));
    let faults = Arc::new(Faults(Mutex::new(Some((stage, Mode::Abort)))));
    let svc = open(Path::new(&db), faults).unwrap_or_else(|_| std::process::exit(94));
    let _ = svc.submit_response(token, &req);
    // Reaching this point means the abort never fired.
    std::process::exit(0);
}
