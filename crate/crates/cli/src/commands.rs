use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use tokio::net::TcpListener;
use turkey_core::domain::{StepSpec, BUILTIN_AUDITORS};
use turkey_core::export::write_fingerprint_csv;
use turkey_core::{
    parse_export, OrderingMode, PluginRegistry, Service, ServiceConfig, ServiceError, StepKind, Store, TaskId, TaskSpec,
};

use crate::args::{ExportArgs, SeedDemoArgs, ServeArgs, SimulateArgs};
use crate::exit::Failure;
use crate::sim::{simulate, SimConfig};

fn open_store(db: &Path) -> Result<Store, Failure> {
    Store::open(db).map_err(|e| Failure::Storage(e.to_string()))
}

fn offline_service(db: &Path) -> Result<Service, Failure> {
    Ok(Service::new(
        open_store(db)?,
        PluginRegistry::with_builtins(None),
        ServiceConfig::new(""),
    ))
}

fn service_failure(e: ServiceError) -> Failure {
    match e {
        ServiceError::TaskNotFound(id) => Failure::UnknownTask(format!("task {id} not found")),
        other => Failure::Storage(other.to_string()),
    }
}

pub async fn serve(args: ServeArgs) -> Result<(), Failure> {
    let token = args
        .admin_token
        .filter(|t| !t.trim().is_empty())
        .ok_or_else(|| Failure::Usage("an admin token is required (--admin-token or TURKEY_ADMIN_TOKEN)".into()))?;
    if args.session_ttl_secs == 0 {
        return Err(Failure::Usage("--session-ttl-secs must be positive".into()));
    }
    let mut registry = PluginRegistry::with_builtins(args.asset_root.clone());
    if args.asset_root.is_some() {
        let loaded = registry
            .load_manifests()
            .map_err(|e| Failure::Usage(format!("plugin manifests: {e}")))?;
        for kind in loaded {
            tracing::info!(%kind, "registered plugin");
        }
    }
    let store = open_store(&args.db)?;
    let config = ServiceConfig::new(token).with_session_ttl(Duration::from_secs(args.session_ttl_secs));
    let service = Arc::new(Service::new(store, registry, config));

    let listener = TcpListener::bind(args.bind)
        .await
        .map_err(|e| Failure::Bind(format!("cannot bind {}: {e}", args.bind)))?;
    let addr = listener.local_addr().map_err(|e| Failure::Bind(e.to_string()))?;
    println!("listening on http://{addr}");
    let _ = std::io::stdout().flush();

    let sweep_every = Duration::from_secs((args.session_ttl_secs / 4).clamp(1, 60));
    let sweeper = turkey_server::spawn_session_sweeper(service.clone(), sweep_every);
    let app = turkey_server::router(service, args.asset_root);
    let result = turkey_server::serve(listener, app, shutdown_signal()).await;
    sweeper.abort();
    result.map_err(|e| Failure::Io(format!("server error: {e}")))?;
    tracing::info!("shut down");
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

pub async fn export(args: ExportArgs) -> Result<(), Failure> {
    let xml = match &args.url {
        Some(url) => fetch_export(url, &args).await?,
        None => {
            if !args.db.exists() {
                return Err(Failure::Storage(format!("no database at {}", args.db.display())));
            }
            let service = offline_service(&args.db)?;
            service
                .export_xml(&TaskId::from(args.task.as_str()))
                .map_err(service_failure)?
                .into_bytes()
        }
    };
    std::fs::write(&args.out, &xml).map_err(|e| Failure::Io(format!("{}: {e}", args.out.display())))?;

    let doc = parse_export(&xml).map_err(|e| Failure::Io(format!("export does not parse: {e}")))?;
    if let Some(path) = &args.fingerprints {
        let io = |e: &dyn std::fmt::Display| Failure::Io(format!("{}: {e}", path.display()));
        let file = File::create(path).map_err(|e| io(&e))?;
        let mut out = BufWriter::new(file);
        write_fingerprint_csv(&doc, &mut out).map_err(|e| io(&e))?;
        out.flush().map_err(|e| io(&e))?;
    }
    println!("wrote {} ({} responses)", args.out.display(), doc.responses.len());
    Ok(())
}

async fn fetch_export(url: &str, args: &ExportArgs) -> Result<Vec<u8>, Failure> {
    let token = args
        .admin_token
        .as_deref()
        .filter(|t| !t.is_empty())
        .ok_or_else(|| Failure::Usage("remote export needs --admin-token or TURKEY_ADMIN_TOKEN".into()))?;
    let endpoint = format!("{}/api/v1/tasks/{}/export.xml", url.trim_end_matches('/'), args.task);
    let resp = reqwest::Client::new()
        .get(&endpoint)
        .bearer_auth(token)
        .send()
        .await
        .map_err(|e| Failure::Io(format!("{endpoint}: {e}")))?;
    match resp.status() {
        s if s.is_success() => Ok(resp
            .bytes()
            .await
            .map_err(|e| Failure::Io(format!("{endpoint}: {e}")))?
            .to_vec()),
        reqwest::StatusCode::NOT_FOUND => Err(Failure::UnknownTask(format!("task {} not found", args.task))),
        s => Err(Failure::Io(format!("{endpoint}: HTTP {s}"))),
    }
}

/// The demo task: three step kinds, every built-in auditor, randomized order.
pub fn demo_spec() -> TaskSpec {
    let step = |kind: StepKind, prompt: &str, options: &[&str]| StepSpec {
        step_id: None,
        kind,
        prompt: prompt.into(),
        options: options.iter().map(|s| s.to_string()).collect(),
        required: true,
    };
    TaskSpec {
        name: "Demo: image labeling".into(),
        description: "Look at the picture and answer three short questions.".into(),
        steps: vec![
            step(
                StepKind::MultipleChoice,
                "Which animal is in the picture?",
                &["cat", "dog", "turkey"],
            ),
            step(
                StepKind::MultipleAnswer,
                "Which colors appear?",
                &["red", "green", "blue", "brown"],
            ),
            step(StepKind::TextResponse, "Describe the background in a sentence.", &[]),
        ],
        ordering_mode: OrderingMode::Randomized,
        auditors: BUILTIN_AUDITORS.iter().map(|s| s.to_string()).collect(),
    }
}

pub fn seed_demo(args: SeedDemoArgs) -> Result<(), Failure> {
    let service = offline_service(&args.db)?;
    let task = service.create_task(demo_spec()).map_err(service_failure)?;
    service.publish_task(&task.task_id).map_err(service_failure)?;
    println!("{}", task.task_id);
    Ok(())
}

pub async fn simulate_cmd(args: SimulateArgs) -> Result<(), Failure> {
    let config = SimConfig {
        url: args.url.trim_end_matches('/').to_owned(),
        task_id: args.task,
        workers: args.workers,
        profile: args.profile,
        seed: args.seed,
        parallelism: args.parallelism,
    };
    let report = simulate(config).await.map_err(|e| Failure::Protocol(e.to_string()))?;
    for w in &report.workers {
        println!(
            "worker {} assignment={} response_pk={} events={} accepted={}",
            w.index, w.assignment_id, w.response_pk, w.events_generated, w.events_accepted
        );
    }
    println!(
        "profile={} workers={} responses={} events={} accepted={}",
        args.profile,
        report.workers.len(),
        report.workers.len(),
        report.events_generated(),
        report.events_accepted()
    );
    Ok(())
}
