use std::process::ExitCode;

use clap::Parser;
use rollscan::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ROLLSCAN_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("rollscan: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
