//! The `turkey` command: serve, export, seed-demo and simulate.

pub mod args;
pub mod commands;
pub mod exit;
pub mod sim;

use args::{Cli, Command};
use exit::Failure;

pub async fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Serve(a) => commands::serve(a).await,
        Command::Export(a) => commands::export(a).await,
        Command::SeedDemo(a) => commands::seed_demo(a),
        Command::Simulate(a) => commands::simulate_cmd(a).await,
    }
}
