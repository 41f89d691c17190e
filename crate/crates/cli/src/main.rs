use std::process::ExitCode;

use clap::Parser;
use cpdegen_cli::args::Cli;
use cpdegen_cli::run;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match cli.command.to_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Some(path) = &cli.command.common().save_config {
        let saved = config.to_toml().and_then(|s| Ok(std::fs::write(path, s)?));
        if let Err(e) = saved {
            eprintln!("error: saving config to {}: {e:#}", path.display());
            return ExitCode::from(2);
        }
    }
    match run(&config) {
        Ok(out) => {
            print!("{}", out.summary);
            for p in &out.artifacts {
                println!("wrote {}", p.display());
            }
            match out.shortfall {
                Some(msg) => {
                    eprintln!("analysis failure: {msg}");
                    ExitCode::from(1)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
