use std::process::ExitCode;

use clap::Parser;
use nsquant_cli::commands;
use nsquant_cli::config::Cli;

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("NSQUANT_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| anyhow::anyhow!("NSQUANT_THREADS must be a positive integer, got '{v}'"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|_| commands::run(&cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
