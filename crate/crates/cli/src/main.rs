use clap::Parser;

use borrowlab::commands;
use borrowlab::config::{self, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let run_config = match config::resolve(&cli.command) {
        Ok(cfg) => cfg,
        Err(e) => fail(e),
    };
    if let Err(e) = commands::run(&run_config) {
        fail(e);
    }
}

fn fail(e: borrowlab::error::CliError) -> ! {
    // Machine-readable error record on stderr.
    eprintln!(
        "{}",
        serde_json::to_string(&e).unwrap_or_else(|_| e.to_string())
    );
    std::process::exit(1);
}
