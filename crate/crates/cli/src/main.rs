use clap::Parser;
use turkey_cli::args::{Cli, Command};

#[tokio::main]
async fn main() {
    let cli = Cli::parse();
    if matches!(cli.command, Command::Serve(_)) {
        tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    }
    if let Err(failure) = turkey_cli::run(cli).await {
        eprintln!("turkey: {failure}");
        std::process::exit(failure.code());
    }
}
