use std::process::ExitCode;

use clap::Parser;

use gstvar::GstvarError;
use gstvar_cli::commands::{run, Cli};

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<GstvarError>() {
        Some(GstvarError::NoAdequateSolution { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
