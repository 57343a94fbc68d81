use std::process::ExitCode;

use clap::Parser;
use lora_hull::cli::{run, Cli};

fn main() -> ExitCode {
    // Usage errors keep clap's own exit status (2, a parse error).
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
