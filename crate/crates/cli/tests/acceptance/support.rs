use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Value};
use tokio::sync::oneshot;
use turkey_core::audit::{AuditEvent, FocusState};
use turkey_core::domain::SplitMix64;
use turkey_core::service::AnswerInput;
use turkey_core::{ExportDocument, PluginRegistry, Service, ServiceConfig, Store, TaskId};

pub const ADMIN_TOKEN: &str = "acceptance-token";

/// Fails the criterion with a message unless `cond` holds.
macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}
pub(crate) use ensure;

pub struct Rng(SplitMix64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::new(seed))
    }

    pub fn next(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `lo..hi`.
    pub fn range(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.next() % (hi - lo)
    }

    pub fn chance(&mut self, p: f64) -> bool {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64 <= p
    }

    pub fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.range(0, items.len() as u64) as usize]
    }
}

/// Random events over all five built-in kinds with non-decreasing time
/// (ties included) and alternating focus state.
pub fn random_events(rng: &mut Rng, n: usize) -> Vec<AuditEvent> {
    let mut t = 0;
    let mut blurred = false;
    (0..n)
        .map(|_| {
            t += rng.range(0, 400);
            let x = rng.range(0, 2000) as u32;
            let y = rng.range(0, 1200) as u32;
            match rng.range(0, 10) {
                0..=4 => AuditEvent::mouse(t, x, y),
                5 => AuditEvent::click(t, x, y, "#answer-<1>"),
                6 | 7 => AuditEvent::keypress(t),
                8 => AuditEvent::resize(t, x + 320, y + 240),
                _ => {
                    blurred = !blurred;
                    AuditEvent::focus(t, if blurred { FocusState::Blur } else { FocusState::Focus })
                }
            }
        })
        .collect()
}

pub fn wire(events: &[AuditEvent]) -> Vec<Value> {
    events.iter().map(AuditEvent::to_wire).collect()
}

/// Answers for the demo task's three steps.
pub fn demo_answers(rng: &mut Rng) -> Vec<AnswerInput> {
    vec![
        AnswerInput {
            step_id: "s1".into(),
            value: json!(rng.range(0, 3)),
        },
        AnswerInput {
            step_id: "s2".into(),
            value: json!([0, rng.range(1, 4)]),
        },
        AnswerInput {
            step_id: "s3".into(),
            value: json!("grass & sky <ü>"),
        },
    ]
}

/// Per-kind event counts.
pub fn kind_counts(events: &[AuditEvent]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for e in events {
        *counts.entry(e.kind.clone()).or_insert(0) += 1;
    }
    counts
}

pub fn service(store: Store) -> Service {
    Service::new(
        store,
        PluginRegistry::with_builtins(None),
        ServiceConfig::new(ADMIN_TOKEN),
    )
}

pub fn demo_task(svc: &Service) -> TaskId {
    let task = svc
        .create_task(turkey_cli::commands::demo_spec())
        .expect("create demo task");
    svc.publish_task(&task.task_id).expect("publish demo task");
    task.task_id
}

/// An HTTP server on an ephemeral port, stopped on drop.
pub struct LiveServer {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    handle: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
}

impl LiveServer {
    pub async fn start(service: Arc<Service>) -> Self {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind");
        let addr = listener.local_addr().expect("local addr");
        let (stop, stopped) = oneshot::channel();
        let app = turkey_server::router(service, None);
        let handle = tokio::spawn(turkey_server::serve(listener, app, async {
            let _ = stopped.await;
        }));
        Self {
            addr,
            stop: Some(stop),
            handle: Some(handle),
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn stop(mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(h) = self.handle.take() {
            let _ = h.await;
        }
    }
}

impl Drop for LiveServer {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
    }
}

/// Checks that pks of every model label are exactly 1..=N and that every
/// row points at the response that contains it.
pub fn check_integrity(doc: &ExportDocument) -> Result<(), String> {
    let mut pks: BTreeMap<&str, Vec<i64>> = BTreeMap::new();
    for r in &doc.responses {
        let pk = r.record.pk;
        pks.entry("survey.response").or_default().push(pk);
        for a in &r.record.answers {
            ensure!(
                a.general_model == pk,
                "answer {} points at {} inside response {pk}",
                a.pk,
                a.general_model
            );
            pks.entry("survey.stepanswer").or_default().push(a.pk);
        }
        for (kind, rows) in &r.auditors {
            let schema = doc
                .auditor_schema(kind)
                .ok_or_else(|| format!("undeclared auditor {kind}"))?;
            for row in rows {
                ensure!(row.model == schema.model_label, "row model {} under {kind}", row.model);
                ensure!(
                    row.general_model == pk,
                    "{} row {} points at {} inside response {pk}",
                    row.model,
                    row.pk,
                    row.general_model
                );
                pks.entry(row.model.as_str()).or_default().push(row.pk);
            }
        }
    }
    for (model, list) in &mut pks {
        list.sort_unstable();
        let dense = list.iter().enumerate().all(|(i, &pk)| pk == i as i64 + 1);
        ensure!(
            dense,
            "{model} pks are not 1..={}: {:?}",
            list.len(),
            &list[..list.len().min(20)]
        );
    }
    Ok(())
}

pub fn temp_db(dir: &Path) -> std::path::PathBuf {
    dir.join("turkey.db")
}
