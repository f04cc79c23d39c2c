use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::sim::Profile;

#[derive(Debug, Parser)]
#[command(
    name = "turkey",
    version,
    about = "Self-hosted external-HIT server with behavioral auditing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write a task's XML export, and optionally its fingerprint CSV.
    Export(ExportArgs),
    /// Create and publish a demo task.
    SeedDemo(SeedDemoArgs),
    /// Drive synthetic workers against a running server.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "TURKEY_BIND_ADDR", default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[arg(long, env = "TURKEY_DB_PATH", default_value = "turkey.db")]
    pub db: PathBuf,
    #[arg(long, env = "TURKEY_ADMIN_TOKEN", hide_env_values = true)]
    pub admin_token: Option<String>,
    /// Directory holding runner/, admin/ and plugins/.
    #[arg(long, env = "TURKEY_ASSET_ROOT")]
    pub asset_root: Option<PathBuf>,
    #[arg(long, env = "TURKEY_SESSION_TTL_SECS", default_value_t = turkey_core::service::DEFAULT_SESSION_TTL_SECS)]
    pub session_ttl_secs: u64,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, env = "TURKEY_TASK")]
    pub task: String,
    #[arg(long, env = "TURKEY_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "TURKEY_FINGERPRINTS")]
    pub fingerprints: Option<PathBuf>,
    /// Read the database directly (used unless --url is given).
    #[arg(long, env = "TURKEY_DB_PATH", default_value = "turkey.db")]
    pub db: PathBuf,
    /// Fetch from a running server instead of the database.
    #[arg(long, env = "TURKEY_URL")]
    pub url: Option<String>,
    #[arg(long, env = "TURKEY_ADMIN_TOKEN", hide_env_values = true)]
    pub admin_token: Option<String>,
}

#[derive(Debug, Args)]
pub struct SeedDemoArgs {
    #[arg(long, env = "TURKEY_DB_PATH", default_value = "turkey.db")]
    pub db: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, env = "TURKEY_URL", default_value = "http://127.0.0.1:8080")]
    pub url: String,
    #[arg(long, env = "TURKEY_TASK")]
    pub task: String,
    #[arg(long, env = "TURKEY_WORKERS", default_value_t = 1)]
    pub workers: usize,
    #[arg(long, env = "TURKEY_PROFILE", default_value = "diligent")]
    pub profile: Profile,
    #[arg(long, env = "TURKEY_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "TURKEY_PARALLELISM", default_value_t = 8)]
    pub parallelism: usize,
}
