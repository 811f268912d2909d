use std::process::ExitCode;

use clap::Parser;
use heatprobe_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(manifest) => {
            for f in &manifest.files {
                println!("{}  {}", f.sha256, f.file);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("heatprobe: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
