use std::io::Write;
use std::process::ExitCode;

use bcfeed_cli::{run, Cli, SEED_ENV};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed_env = std::env::var(SEED_ENV).ok();
    match run(cli, &mut std::io::stdin().lock(), seed_env.as_deref()) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout
                .write_all(out.as_bytes())
                .and_then(|_| stdout.flush())
                .is_err()
            {
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("bcfeed: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
