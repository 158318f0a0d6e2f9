use std::process::ExitCode;

use clap::Parser;
use pearl_cli::{init_logging, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_logging(&cli) {
        eprintln!("error: cannot set up logging: {e:#}");
        return ExitCode::from(1);
    }
    let mut stdout = std::io::stdout().lock();
    match run(&cli, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if cli.log_file.is_some() {
                tracing::error!(error = %e, exit_code = e.exit_code(), "command failed");
            }
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
