use std::process::ExitCode;

use clap::Parser;
use cvnn::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cvnn: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
