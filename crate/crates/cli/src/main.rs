use std::process::ExitCode;

use clap::Parser;
use lawnsim_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(report) => {
            if let Some(o) = &report.outcome {
                for line in &o.summary {
                    println!("{line}");
                }
            }
            for p in &report.written {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("lawnsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
