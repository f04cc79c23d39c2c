use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};

use turkey_core::audit::{detect_bot_signals, BotFlag, BotThresholds};
use turkey_core::parse_export;

use crate::support::{ensure, ADMIN_TOKEN};
use crate::Check;

const TURKEY: &str = env!("CARGO_BIN_EXE_turkey");
const RUNS: [(&str, usize, u64); 3] = [("diligent", 50, 11), ("sloppy", 50, 12), ("bot", 10, 13)];

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn turkey(args: &[&str]) -> Result<String, String> {
    let out = Command::new(TURKEY)
        .args(args)
        .output()
        .map_err(|e| format!("spawn turkey: {e}"))?;
    ensure!(
        out.status.success(),
        "turkey {} exited {:?}: {}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn start_server(db: &Path) -> Result<(Server, String), String> {
    let child = Command::new(TURKEY)
        .args(["serve", "--bind", "127.0.0.1:0", "--admin-token", ADMIN_TOKEN, "--db"])
        .arg(db)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| format!("spawn server: {e}"))?;
    let mut server = Server(child);
    let stdout = server.0.stdout.take().ok_or("server stdout")?;
    let mut line = String::new();
    BufReader::new(stdout).read_line(&mut line).map_err(|e| e.to_string())?;
    let url = line
        .trim()
        .strip_prefix("listening on ")
        .ok_or_else(|| format!("unexpected banner {line:?}"))?;
    Ok((server, url.to_owned()))
}

pub fn run() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let db = dir.path().join("sim.db");
    let db_arg = db.to_str().ok_or("temp path is not UTF-8")?;
    let task = turkey(&["seed-demo", "--db", db_arg])?.trim().to_owned();
    let (_server, url) = start_server(&db)?;

    let mut reported = 0;
    for (profile, workers, seed) in RUNS {
        let out = turkey(&[
            "simulate",
            "--url",
            &url,
            "--task",
            &task,
            "--profile",
            profile,
            "--workers",
            &workers.to_string(),
            "--seed",
            &seed.to_string(),
        ])?;
        let lines = out.lines().filter(|l| l.starts_with("worker ")).count();
        ensure!(
            lines == workers,
            "{profile}: {lines} worker lines for {workers} workers"
        );
        reported += lines;
    }

    let xml_path = dir.path().join("export.xml");
    let csv_path = dir.path().join("fingerprints.csv");
    turkey(&[
        "export",
        "--url",
        &url,
        "--admin-token",
        ADMIN_TOKEN,
        "--task",
        &task,
        "--out",
        xml_path.to_str().ok_or("path")?,
        "--fingerprints",
        csv_path.to_str().ok_or("path")?,
    ])?;
    let xml = std::fs::read(&xml_path).map_err(|e| e.to_string())?;
    let doc = parse_export(&xml).map_err(|e| e.to_string())?;
    let csv_rows = std::fs::read_to_string(&csv_path)
        .map_err(|e| e.to_string())?
        .lines()
        .count()
        - 1;

    ensure!(reported == 110, "simulator reported {reported} submissions");
    ensure!(
        doc.responses.len() == 110,
        "export holds {} responses",
        doc.responses.len()
    );
    ensure!(csv_rows == 110, "fingerprint CSV holds {csv_rows} rows");

    let thresholds = BotThresholds::default();
    let (mut bots, mut diligent) = (0, 0);
    for r in &doc.responses {
        let flags = detect_bot_signals(&r.record.fingerprint, &thresholds).flags;
        let id = &r.record.assignment_id;
        if id.starts_with("SIM-bot-") {
            bots += 1;
            ensure!(
                flags.contains(&BotFlag::NoMouseActivity) && flags.contains(&BotFlag::InstantCompletion),
                "bot {id} flags {flags:?}"
            );
        } else if id.starts_with("SIM-diligent-") {
            diligent += 1;
            ensure!(
                !flags.contains(&BotFlag::NoMouseActivity),
                "diligent {id} flagged no_mouse_activity"
            );
        }
    }
    ensure!(
        bots == 10 && diligent == 50,
        "found {bots} bot and {diligent} diligent responses"
    );
    Ok("110 responses exported; 10/10 bots flagged, 0/50 diligent without mouse activity".into())
}
