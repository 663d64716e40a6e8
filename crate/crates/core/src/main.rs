use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use riskinvest::cli::{execute, Cli};

fn main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let outcome = execute(cli).context("riskinvest failed")?;
    for f in &outcome.files {
        eprintln!("wrote {}", f.display());
    }
    Ok(if outcome.success {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
