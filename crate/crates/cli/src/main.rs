use std::process::ExitCode;

use clap::Parser;
use ostrovsky_cli::{run, Cli, Outcome};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::DryRun { config }) => {
            print!("{config}");
            ExitCode::SUCCESS
        }
        Ok(Outcome::Done(m)) => {
            for c in &m.checks {
                let tag = if c.pass { "pass" } else { "FAIL" };
                println!("{tag}  {}  {:.6e}  {:?}", c.name, c.value, c.bound);
            }
            if m.pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("{}: threshold checks failed", m.command);
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
